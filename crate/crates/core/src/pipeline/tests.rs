use super::*;

fn small_corpus(dir: &Path, gen: GenConfig) -> PipelineConfig {
    run_synth(&gen, dir, None).unwrap();
    PipelineConfig::load(&dir.join(SYNTH_CONFIG_FILE)).unwrap()
}

fn zero_noise(n: usize) -> GenConfig {
    GenConfig {
        n_patients: n,
        ..GenConfig::default().zero_noise()
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn zero_noise_run_matches_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_corpus(dir.path(), zero_noise(80));
    let p = Pipeline::new(config).unwrap();
    p.run_all().unwrap();
    let eval: EvalReport = read_json(&p.out(EVAL_FILE)).unwrap();
    let o = eval.oracle.unwrap();
    assert_eq!((o.cohort_precision, o.cohort_recall), (1.0, 1.0));
    assert_eq!(o.label_agreement, 1.0);
    assert_eq!(o.label_exact_match, 1.0);
    assert_eq!(o.feature_match, 1.0, "{} cells", o.feature_cells);
    assert_eq!(eval.labeled_patients, 80);
    assert_eq!(eval.train_patients + eval.test_patients, 80);
}

#[test]
fn manifest_covers_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_corpus(dir.path(), zero_noise(40));
    let p = Pipeline::new(config).unwrap();
    p.run_all().unwrap();
    let manifest = read_manifest(&p.config.out_dir).unwrap();
    let listed: BTreeSet<&str> = manifest.iter().map(|e| e.artifact.as_str()).collect();
    let expected: Vec<String> = Stage::ALL.iter().flat_map(|s| s.artifacts()).collect();
    assert_eq!(listed, expected.iter().map(String::as_str).collect());
    for e in &manifest {
        let bytes = fs::read(p.out(&e.artifact)).unwrap();
        assert_eq!(sha256_hex(&bytes), e.sha256, "{}", e.artifact);
        let config = fs::read(p.out(CONFIG_DIR).join(format!("{}.json", e.config_hash))).unwrap();
        assert_eq!(sha256_hex(&config), e.config_hash);
        assert_eq!(e.seed, p.config.seed);
    }
    let synth = read_manifest(dir.path()).unwrap();
    assert_eq!(synth.len(), 3 + TABLES.len());
}

#[test]
fn stages_one_by_one_equal_all_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_corpus(dir.path(), GenConfig { n_patients: 50, ..GenConfig::default() });
    let a = Pipeline::new(PipelineConfig {
        out_dir: dir.path().join("a"),
        ..config.clone()
    })
    .unwrap();
    a.run_all().unwrap();
    let first = files(&a.config.out_dir);
    a.run_all().unwrap();
    assert_eq!(files(&a.config.out_dir), first);

    let b = Pipeline::new(PipelineConfig {
        out_dir: dir.path().join("b"),
        jobs: Some(1),
        ..config
    })
    .unwrap();
    for s in Stage::ALL {
        b.run(s).unwrap();
    }
    assert_eq!(files(&b.config.out_dir), first);
}

#[test]
fn merge_rejects_vectors_from_another_schema() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_corpus(dir.path(), zero_noise(20));
    let p = Pipeline::new(config).unwrap();
    for s in [Stage::Cohort, Stage::ExtractReports, Stage::ExtractStructured] {
        p.run(s).unwrap();
    }
    let path = p.out(STRUCTURED_VECTORS_FILE);
    let text = fs::read_to_string(&path).unwrap().replacen(",age,", ",edad,", 1);
    fs::write(&path, text).unwrap();
    let err = p.run(Stage::Merge).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().starts_with("merge: schema mismatch"), "{err}");
}

#[test]
fn missing_inputs_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(PipelineConfig {
        data_dir: dir.path().join("nothing"),
        out_dir: dir.path().join("out"),
        ..PipelineConfig::default()
    })
    .unwrap();
    let err = p.run(Stage::Cohort).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    let err = p.run(Stage::Label).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn stage_names_round_trip() {
    for s in Stage::ALL {
        assert_eq!(s.name().parse::<Stage>(), Ok(s));
    }
    assert!("everything".parse::<Stage>().is_err());
}
