use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dmpcut_core::mesh::{generate, Mesh, MeshFamily, MeshKind};

fn dmpcut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmpcut")).args(args).output().unwrap()
}

fn run_config(dir: &Path, name: &str, body: &str) -> Output {
    let path = dir.join(name);
    let out = dir.join(name.trim_end_matches(".conf"));
    fs::write(&path, format!("{body}\noutput.dir = {}\n", out.display())).unwrap();
    let cmd = if body.contains("dmp_search") { "search" } else { "run" };
    dmpcut(&[cmd, path.to_str().unwrap()])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn linear_data_needs_no_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        dir.path(),
        "lin.conf",
        "experiment = scalar_laplace\nmesh.n = 4\nproblem.g = linear:0.1,1,-0.5\nreference.level = 2",
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("lin/report.txt")).unwrap();
    assert!(report.contains("dmp_violation=0e0"));
    let value = |key: &str| -> f64 {
        let line = report.lines().find(|l| l.starts_with(&format!("{key}="))).unwrap();
        line.split_once('=').unwrap().1.parse().unwrap()
    };
    assert_eq!(value("J_U"), value("J_Ustar"));
    assert_eq!(value("energy_norm_err_U"), value("energy_norm_err_Ustar"));
    assert!(!report.contains("FAIL"));
    assert!(dir.path().join("lin/violation.svg").exists());
    let csv = fs::read_to_string(dir.path().join("lin/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), csv.lines().nth(1).unwrap().split(',').count());
}

#[test]
fn violation_fixture_is_repaired() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        dir.path(),
        "fx.conf",
        "experiment = scalar_laplace\nmesh.kind = obtuse_band\nmesh.n = 4\nmesh.perturbation = 0.2\n\
         mesh.seed = 2\nproblem.g = spike:0,-1\nreference.level = 4",
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("fx/report.txt")).unwrap();
    let violation: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("dmp_violation="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(violation > 1e-3);
    assert!(report.contains("dmp_violation_Ustar=0e0"));
    assert!(report.contains("PASS energy_error_ordering"));
    assert!(report.contains("PASS pointwise_error_bound"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("experiment = scalar_rd\nproblem.f = 1", "f <= 0"),
        ("experiment = scalar_rd\nproblem.c = -2", "c >= 0"),
        ("experiment = scalar_rd\nmesh.colour = red", "unknown key"),
        ("experiment = scalar_rd\nmesh.n = 2\nmesh.n = 3", "duplicate"),
        ("experiment = scalar_laplace\nproblem.g = spike:6", "not a boundary vertex"),
        ("experiment = convergence\nreference.level = 3", "reference.level"),
    ];
    for (i, (body, needle)) in cases.iter().enumerate() {
        let o = run_config(dir.path(), &format!("bad{i}.conf"), body);
        assert_eq!(o.status.code(), Some(2), "{body}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{body}: {}", stderr(&o));
    }
    let path = dir.path().join("s.conf");
    fs::write(&path, "experiment = scalar_rd\n").unwrap();
    assert_eq!(dmpcut(&["search", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(dmpcut(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.conf");
    assert_eq!(dmpcut(&["run", missing.to_str().unwrap()]).status.code(), Some(3));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let path = dir.path().join("c.conf");
    fs::write(
        &path,
        format!("experiment = scalar_laplace\nreference.level = 1\noutput.dir = {}/sub\n", blocker.display()),
    )
    .unwrap();
    assert_eq!(dmpcut(&["run", path.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn numerical_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // the level-7 reference of a 16 x 16 mesh exceeds the dof cap
    let o = run_config(dir.path(), "big.conf", "experiment = scalar_laplace\nmesh.n = 16\nreference.level = 7");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("too large"));
}

#[test]
fn failed_inequality_exits_1_and_keeps_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // pre-asymptotic: the fitted P1 rate on 2, 4, 8 is just below 0.9
    let o = run_config(dir.path(), "pre.conf", "experiment = convergence\nconvergence.n = 2,4,8\nreference.level = 4");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("p1_energy_rate"));
    let report = fs::read_to_string(dir.path().join("pre/report.txt")).unwrap();
    assert!(report.contains("PASS monotone_convergence"));
    assert!(report.contains("FAIL p1_energy_rate"));
}

#[test]
fn results_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let search = "experiment = dmp_search\nsearch.kinds = obtuse_band,perturbed\nsearch.n = 3\n\
                  search.perturbation = 0.2,0.3\nsearch.trials = 4\nsearch.top_k = 5";
    let scalar = "experiment = scalar_rd\nmesh.kind = perturbed\nmesh.n = 3\nmesh.perturbation = 0.3\n\
                  fe.degree = 2\nproblem.c = 2\nproblem.f = -1\nproblem.g = spike:1,-1\nreference.level = 2";
    for (name, body) in [("search", search), ("scalar", scalar)] {
        let a = run_config(dir.path(), &format!("{name}_a.conf"), body);
        let b = run_config(dir.path(), &format!("{name}_b.conf"), body);
        assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
        assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
        let read = |s: &str| fs::read(dir.path().join(format!("{name}_{s}/results.csv"))).unwrap();
        assert_eq!(read("a"), read("b"));
    }
}

#[test]
fn search_reports_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        dir.path(),
        "s.conf",
        "experiment = dmp_search\nsearch.kinds = obtuse_band\nsearch.n = 4\nsearch.perturbation = 0.2\nsearch.trials = 5\nsearch.top_k = 3",
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("s/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let top: f64 = csv.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(top > 1e-3);
    // fixtures are runnable configurations
    let fixture = dir.path().join("s/fixture_01.conf");
    let text = fs::read_to_string(&fixture).unwrap().replace("reference.level = 5", "reference.level = 3");
    fs::write(&fixture, text).unwrap();
    let o = dmpcut(&["run", fixture.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = run_config(dir.path(), "none.conf", "experiment = dmp_search\nsearch.trials = 0");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("none/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);

    let o = run_config(
        dir.path(),
        "acute.conf",
        "experiment = dmp_search\nsearch.kinds = structured\nsearch.n = 2,3,5\nsearch.trials = 2",
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("acute/report.txt")).unwrap();
    assert!(report.contains("above_threshold=0"));
}

#[test]
fn other_experiments_run() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "vec.conf",
            "experiment = vector_laplace\nmesh.kind = obtuse_band\nmesh.n = 4\nmesh.perturbation = 0.2\nmesh.seed = 2\n\
             problem.g = spike:0,-1\nproblem.g2 = linear:0.2,0.1,0",
        ),
        (
            "plap.conf",
            "experiment = p_laplace\nmesh.kind = obtuse_band\nmesh.n = 3\nmesh.perturbation = 0.2\nmesh.seed = 2\n\
             problem.g = spike:0,-1\nproblem.p = 3\nreference.level = 1",
        ),
        ("conv.conf", "experiment = convergence\nconvergence.n = 4,8,16\nreference.level = 5"),
    ];
    for (name, body) in cases {
        let o = run_config(dir.path(), name, body);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
    }
    assert!(dir.path().join("conv/convergence.svg").exists());
    let csv = fs::read_to_string(dir.path().join("conv/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.txt");
    let base = || {
        let mut c = Command::new(env!("CARGO_BIN_EXE_dmpcut"));
        c.args(["mesh", "-o", out.to_str().unwrap()]);
        c
    };
    assert_eq!(base().env("DMPCUT_THREADS", "0").output().unwrap().status.code(), Some(2));
    assert_eq!(base().env("DMPCUT_THREADS", "2").output().unwrap().status.code(), Some(0));
}

#[test]
fn mesh_command_writes_the_family() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mesh.txt");
    let o = dmpcut(&[
        "mesh", "--kind", "obtuse_band", "--n", "5", "--perturbation", "0.25", "--seed", "9", "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let expected = generate(&MeshFamily::new(MeshKind::ObtuseBand, 5, 0.25, 9)).unwrap();
    assert_eq!(Mesh::load(&path).unwrap(), expected);
    assert_eq!(dmpcut(&["mesh", "--n", "0", "-o", path.to_str().unwrap()]).status.code(), Some(2));
    let nowhere = dir.path().join("no/such/dir/mesh.txt");
    assert_eq!(dmpcut(&["mesh", "-o", nowhere.to_str().unwrap()]).status.code(), Some(3));
}
