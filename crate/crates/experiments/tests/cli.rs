use std::path::Path;
use std::process::{Command, Output};

use data_io::{read_csv, write_csv, write_idx, Cell, IdxDataset, Split, IMAGE_PIXELS, SPLIT_FILES};
use experiments::curve::{curve, merge, pair};
use experiments::pca::{pca, project};
use experiments::recon::recon_dump;
use experiments::training::{Data, SweepRow, SWEEP_COLUMNS};
use experiments::{Scale, Settings};
use info_core::battery::{check_instance, generate_instance};
use models::{Classifier, Vae, VaeSpec};
use rand::SeedableRng;

fn acrd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acrd"))
        .args(args)
        .env_remove("ACRD_DATA_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Class `k` lights up rows `2k + 4 .. 2k + 8`, with a little texture.
fn banded(n: usize, salt: usize) -> IdxDataset {
    let mut images = vec![0u8; n * IMAGE_PIXELS];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = (i * 7 + salt) % 10;
        labels.push(k as u8);
        for r in 2 * k + 4..2 * k + 8 {
            for c in 0..28 {
                images[i * IMAGE_PIXELS + r * 28 + c] = 160 + ((i * 13 + c * 5) % 90) as u8;
            }
        }
    }
    IdxDataset::new(images, labels, Split::Train).unwrap()
}

fn write_dataset(dir: &Path, train: usize, test: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for (split, img, lab) in SPLIT_FILES {
        let ds = if split == Split::Train { banded(train, 0) } else { banded(test, 3) };
        write_idx(&ds, &dir.join(img), &dir.join(lab), true).unwrap();
    }
}

fn payload(path: &Path) -> String {
    read_csv(path).unwrap().payload()
}

#[test]
fn rd_demo_reports_the_half_distortion_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = acrd(&["rd-demo", "--out-dir", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("rate 0.207519 bits at distortion 0.500000"), "{}", stdout(&o));
    let t = read_csv(&dir.path().join("rd_demo.csv")).unwrap();
    assert_eq!(&t.columns[..3], ["slope", "distortion", "rate_bits"]);
    assert_eq!(t.meta("seed"), Some("0"));
    assert!(t.meta("version").is_some());

    let o = acrd(&["rd-demo", "--m", "2", "--out-dir", out]);
    assert_eq!(code(&o), 0);
    let t = read_csv(&dir.path().join("rd_demo.csv")).unwrap();
    let (s, r) = (t.numbers("slope").unwrap(), t.numbers("rate_bits").unwrap());
    for (s, r) in s.iter().zip(&r) {
        // The binary optimum flips the bit with probability 1/(1 + e^s).
        let (s, r) = (s.unwrap(), r.unwrap());
        let d = 1.0 / (1.0 + s.exp());
        let h = -d * d.log2() - (1.0 - d) * (1.0 - d).log2();
        assert!((r - (1.0 - h)).abs() < 2e-6, "s={s} D={d} R={r}");
    }
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&acrd(&["rd-demo", "--slopes=", "--out-dir", out])), 1);
    assert_eq!(code(&acrd(&["rd-demo", "--m", "1", "--out-dir", out])), 1);
    assert_eq!(code(&acrd(&["info-tests", "--count", "0", "--out-dir", out])), 1);
    assert_eq!(code(&acrd(&["rd-demo", "--scale", "huge", "--out-dir", out])), 1);
    // No classifier checkpoint in a fresh output directory.
    let data = dir.path().join("data");
    write_dataset(&data, 8, 8);
    let o = acrd(&["sweep", "--data-dir", data.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-classifier"));
}

#[test]
fn io_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&acrd(&["curve", missing.to_str().unwrap(), "--out-dir", out])), 3);
    let o = acrd(&["train-classifier", "--data-dir", dir.path().join("empty").to_str().unwrap(), "--out-dir", out]);
    assert_eq!(code(&o), 3);
}

#[test]
fn malformed_sweep_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(
        &p,
        format!("# seed=0\n{}\nvanilla,1,3.0,0.1,0.1,0.5,0.01,,ok\nvanilla,2,abc,0.1,0.1,0.5,0.01,,ok\n", SWEEP_COLUMNS.join(",")),
    )
    .unwrap();
    let o = acrd(&["curve", p.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":4"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[run]\nscale = \"full\"\nseed = 5\n[vae]\nepochs = 3\nprobe_every = 7\n[sweep]\nvanilla_betas = [2, 0.5]\n",
    )
    .unwrap();
    let s = Settings::from_file(Some(&cfg), None).unwrap();
    assert_eq!((s.scale, s.seed, s.vae_epochs, s.probe_every), (Scale::Full, 5, 3, 7));
    assert_eq!(s.vanilla_betas, vec![2.0, 0.5]);
    assert_eq!(s.train_limit, None);
    let s = Settings::from_file(Some(&cfg), Some(Scale::Desk)).unwrap();
    assert_eq!((s.scale, s.train_limit, s.vae_epochs), (Scale::Desk, Some(10_000), 3));

    let out = dir.path().join("out");
    let o = acrd(&["rd-demo", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let t = read_csv(&out.join("rd_demo.csv")).unwrap();
    assert_eq!(t.meta("seed"), Some("9"));
    assert_eq!(t.meta("scale"), Some("full"));
    assert_eq!(t.meta("vae_epochs"), Some("3"));

    std::fs::write(&cfg, "[vae]\nwidth = 3\n").unwrap();
    assert!(Settings::from_file(Some(&cfg), None).is_err());
    std::fs::write(&cfg, "[sweep]\nvanilla_betas = [1, -2]\n").unwrap();
    assert!(Settings::from_file(Some(&cfg), None).unwrap().validate().is_err());
}

fn row(mode: &str, beta: f64, rate: f64, acc: f64) -> Vec<Cell> {
    vec![
        Cell::Text(mode.into()),
        Cell::Text(beta.to_string()),
        Cell::Num(rate),
        Cell::Num(0.1),
        Cell::Num(0.2),
        Cell::Num(acc),
        Cell::Num(0.03),
        Cell::Empty,
        Cell::Text("ok".into()),
    ]
}

fn write_sweep(path: &Path, rows: &[Vec<Cell>]) {
    write_csv(path, &[("seed".into(), "0".into())], &SWEEP_COLUMNS, rows).unwrap();
}

#[test]
fn pairing_uses_one_bit_windows() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.csv");
    let a = dir.path().join("a.csv");
    write_sweep(&v, &[row("vanilla", 10.0, 5.0, 0.6), row("vanilla", 1.0, 10.2, 0.65), row("vanilla", 0.1, 20.0, 0.7)]);
    let mut failed = row("action_centric", 0.5, 1.0, 0.1);
    failed[8] = Cell::Text("failed: diverged".into());
    write_sweep(
        &a,
        &[row("action_centric", 0.01, 9.5, 0.82), row("action_centric", 0.001, 13.0, 0.85), failed],
    );
    let c = curve(&[&v, &a], dir.path(), &[]).unwrap();
    assert_eq!(c.points.len(), 5);
    assert_eq!(c.pairs.len(), 1, "13 bits has no vanilla point within a bit");
    assert_eq!(c.pairs[0].vanilla.rate_bits, 10.2);
    assert!((c.pairs[0].gap() - 0.17).abs() < 1e-12);
    let rates: Vec<f64> = c.points.iter().map(|r| r.rate_bits).collect();
    assert_eq!(rates, vec![9.5, 13.0, 5.0, 10.2, 20.0]);

    // One mode alone pairs with nothing.
    assert!(pair(&merge(&[&v]).unwrap()).is_empty());
    assert!(merge(&[]).is_err());
}

#[test]
fn identical_sweeps_have_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    let rows: Vec<Vec<Cell>> = (0..5)
        .flat_map(|i| {
            let (r, acc) = (3.0 + 2.0 * i as f64, 0.5 + 0.05 * i as f64);
            [row("vanilla", 1.0 + i as f64, r, acc), row("action_centric", 0.1 + i as f64, r, acc)]
        })
        .collect();
    write_sweep(&p, &rows);
    let c = curve(&[&p, &p], dir.path(), &[]).unwrap();
    assert_eq!(c.pairs.len(), 10);
    assert!(c.pairs.iter().all(|p| p.gap() == 0.0));
    let t = read_csv(&dir.path().join("pairs.csv")).unwrap();
    assert!(t.numbers("accuracy_gap").unwrap().iter().all(|g| *g == Some(0.0)));
}

#[test]
fn recon_dump_rejects_zero_images() {
    let data = Data {
        train: banded(4, 0),
        test: banded(4, 1),
    };
    let vae = Vae::new(VaeSpec::default(), 0);
    let cls = Classifier::new(0);
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        recon_dump(&vae, &cls, &data, 0, dir.path(), &[]),
        Err(experiments::CliError::Validation(_))
    ));
    let r = recon_dump(&vae, &cls, &data, 3, dir.path(), &[]).unwrap();
    assert!(r.mse > 0.0 && (0.0..=1.0).contains(&r.accuracy));
    assert!(dir.path().join("inputs.pgm").exists() && dir.path().join("reconstructions.pgm").exists());
}

fn gaussian_latents(n: usize, scales: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let z = tensor_autodiff::rng::normal_vec(&mut rng, n * scales.len());
    z.chunks(scales.len())
        .flat_map(|r| r.iter().zip(scales).map(|(v, s)| v * s + 1.5).collect::<Vec<_>>())
        .collect()
}

#[test]
fn pca_recovers_axis_aligned_variances() {
    let scales = [4.0, 3.0, 2.0, 1.0, 0.5, 0.25, 0.1, 0.05];
    let z = gaussian_latents(4000, &scales, 1);
    let p = pca(&z, 8, 8).unwrap();
    assert!((p.explained.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let total: f64 = scales.iter().map(|s| s * s).sum();
    for (i, s) in scales.iter().enumerate() {
        // Sampling noise on a variance estimate from 4000 draws is a few percent.
        assert!((p.explained[i] - s * s / total).abs() < 0.02, "pc{} {}", i + 1, p.explained[i]);
        assert!(p.components[i][i].abs() > 0.95);
    }
    for w in p.eigenvalues.windows(2) {
        assert!(w[0] >= w[1]);
    }
    for (a, u) in p.components.iter().enumerate() {
        for (b, v) in p.components.iter().enumerate() {
            let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
            assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
    }
}

#[test]
fn pca_isotropic_latents_split_variance_evenly() {
    let z = gaussian_latents(20_000, &[1.0; 8], 2);
    let p = pca(&z, 8, 8).unwrap();
    assert!((p.explained.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    for e in &p.explained {
        assert!((e - 0.125).abs() < 0.02, "{e}");
    }
}

#[test]
fn pca_rejects_bad_shapes() {
    assert!(pca(&[1.0, 2.0, 3.0], 2, 1).is_err());
    assert!(pca(&[1.0, 2.0], 2, 1).is_err());
    assert!(pca(&[1.0, 2.0, 3.0, 4.0], 2, 3).is_err());
    assert!(pca(&[1.0, 2.0, 3.0, 4.0], 2, 0).is_err());
    // Constant latents have no variance to explain but still project.
    let p = pca(&[1.0; 12], 3, 2).unwrap();
    assert!(p.projections.iter().all(|v| *v == 0.0));
    assert_eq!(project(&[1.0, 1.0, 1.0], 3, &p.mean, &p.components), vec![0.0, 0.0]);
}

#[test]
fn info_tests_pass_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = acrd(&["info-tests", "--count", "50", "--seed", "4", "--out-dir", out]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let t = read_csv(&dir.path().join("info_tests.csv")).unwrap();
    assert_eq!(t.meta("instances"), Some("50"));
    assert!(t.numbers("failures").unwrap().iter().all(|f| *f == Some(0.0)));

    let inst = generate_instance(4, 17);
    let saved = dir.path().join("instance.txt");
    std::fs::write(&saved, inst.to_text()).unwrap();
    let o = acrd(&["info-tests", "--replay", saved.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let want = check_instance(&inst).unwrap();
    assert_eq!(stdout(&o).lines().count(), want.len());
    for (line, w) in stdout(&o).lines().zip(&want) {
        assert!(line.starts_with(if w.passed { "PASS" } else { "FAIL" }) && line.contains(w.name));
    }
    std::fs::write(&saved, "garbage").unwrap();
    assert_eq!(code(&acrd(&["info-tests", "--replay", saved.to_str().unwrap()])), 1);
}

/// The whole pipeline on a tiny synthetic dataset, run twice.
#[test]
fn pipeline_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&data, 96, 40);
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(
        &cfg,
        "[run]\nseed = 3\n[classifier]\nepochs = 2\nbatch_size = 32\n[vae]\nepochs = 1\nbatch_size = 48\nprobe_every = 1\nprobe_size = 16\n\
         [sweep]\nvanilla_betas = [1.0]\naction_betas = [0.01]\n",
    )
    .unwrap();
    let run = |out: &Path| -> Vec<String> {
        let base = |extra: &[&str]| {
            let mut args = extra.to_vec();
            args.extend(["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
            let o = Command::new(env!("CARGO_BIN_EXE_acrd"))
                .args(&args)
                .env("ACRD_DATA_DIR", &data)
                .output()
                .unwrap();
            assert_eq!(code(&o), 0, "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
            stdout(&o)
        };
        base(&["train-classifier"]);
        base(&["sweep"]);
        let sweep = out.join("sweep.csv");
        let first = std::fs::read(&sweep).unwrap();
        base(&["sweep"]);
        assert_eq!(first, std::fs::read(&sweep).unwrap(), "rerun retrains or rewrites");
        base(&["curve", sweep.to_str().unwrap()]);
        let ckpt = out.join("vae/action_centric_beta0.01/model.ckpt");
        base(&["recon-dump", "--checkpoint", ckpt.to_str().unwrap(), "--n", "10"]);
        let printed = base(&["pca", "--checkpoint", ckpt.to_str().unwrap(), "--k", "8"]);
        assert!(printed.contains("total explained 1.000000"), "{printed}");
        [
            "classifier/summary.csv",
            "classifier/metrics.csv",
            "sweep.csv",
            "vae/vanilla_beta1/metrics.csv",
            "curve.csv",
            "pairs.csv",
            "recon/action_centric_beta0.01/recon_summary.csv",
            "pca/action_centric_beta0.01/pca.csv",
            "pca/action_centric_beta0.01/pca_components.csv",
        ]
        .iter()
        .map(|f| payload(&out.join(f)))
        .collect()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a, b);

    let rows = SweepRow::read_all(&dir.path().join("a/sweep.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(SweepRow::ok));
    let t = read_csv(&dir.path().join("a/classifier/summary.csv")).unwrap();
    assert_eq!(t.meta("seed"), Some("3"));

    // Projections recomputed from the emitted means and eigenvectors.
    let pdir = dir.path().join("a/pca/action_centric_beta0.01");
    let comps = read_csv(&pdir.join("pca_components.csv")).unwrap();
    let vecs: Vec<Vec<f64>> = comps
        .rows
        .iter()
        .map(|(_, r)| r[3..].iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    let latents = read_csv(&pdir.join("latents.csv")).unwrap();
    let z: Vec<f64> = latents
        .rows
        .iter()
        .flat_map(|(_, r)| r[..8].iter().map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect();
    let again = project(&z, 8, &vecs[0], &vecs[1..]);
    let emitted: Vec<f64> = read_csv(&pdir.join("pca.csv"))
        .unwrap()
        .rows
        .iter()
        .flat_map(|(_, r)| r[..8].iter().map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect();
    assert_eq!(again.len(), emitted.len());
    for (x, y) in again.iter().zip(&emitted) {
        assert!((x - y).abs() < 1e-9);
    }
    let explained: f64 = comps.numbers("explained_variance").unwrap().iter().flatten().sum();
    assert!((explained - 1.0).abs() < 1e-9);
}

#[test]
fn shipped_configs_match_scale_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, scale) in [("full.toml", Scale::Full), ("desk.toml", Scale::Desk)] {
        let s = Settings::from_file(Some(&root.join(file)), None).unwrap();
        assert_eq!(s, Settings::defaults(scale), "{file}");
    }
}
