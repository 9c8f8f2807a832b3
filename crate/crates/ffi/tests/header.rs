use std::path::PathBuf;
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn header() -> String {
    std::fs::read_to_string(crate_dir().join("include/chpca.h")).expect("header is generated by the build script")
}

#[test]
fn header_declares_every_export() {
    let source = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 10, "{exports:?}");
    let h = header();
    for name in exports {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    for item in ["typedef struct ChpcaSpectrum ChpcaSpectrum;", "CHPCA_STATUS_OK = 0", "CHPCA_DETREND_STATE_SPACE = 1"] {
        assert!(h.contains(item), "{item}");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let probe = dir.path().join("probe.c");
    std::fs::write(
        &probe,
        "#include \"chpca.h\"\nint main(void) { ChpcaOptions o = chpca_options_default(); return (int)o.detrend - 1; }\n",
    )
    .unwrap();
    let include = crate_dir().join("include");
    for (compiler, extra) in [("cc", &["-std=c99"][..]), ("c++", &["-x", "c++"][..])] {
        let status = Command::new(compiler)
            .args(extra)
            .arg("-fsyntax-only")
            .arg("-Wall")
            .arg("-Werror")
            .arg("-I")
            .arg(&include)
            .arg(&probe)
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(e) => eprintln!("{compiler} unavailable ({e}); syntax check not run"),
        }
    }
}

#[test]
fn c_program_links_and_runs() {
    // target/<profile>/deps/<this test> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libchpca_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let compiled = Command::new("cc")
        .arg("-std=c99")
        .arg("-D_DEFAULT_SOURCE")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status();
    match compiled {
        Ok(s) => assert!(s.success(), "C smoke program failed to build"),
        Err(e) => {
            eprintln!("cc unavailable ({e}); C link check not run");
            return;
        }
    }
    let out = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "exit {:?}: {stdout}{}", out.status, String::from_utf8_lossy(&out.stderr));
    assert!(stdout.starts_with("lambda1="), "{stdout}");
}
