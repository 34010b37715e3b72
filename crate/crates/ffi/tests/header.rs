use std::path::Path;
use std::process::Command;

const SYMBOLS: &[&str] = &[
    "vpb_last_error",
    "vpb_operator_new",
    "vpb_operator_free",
    "vpb_operator_len",
    "vpb_operator_apply_q",
    "vpb_operator_apply_l",
    "vpb_simulation_from_toml",
    "vpb_simulation_free",
    "vpb_simulation_step",
    "vpb_simulation_time",
    "vpb_simulation_sup",
    "vpb_simulation_state_len",
    "vpb_simulation_copy_state",
    "vpb_weight",
    "vpb_decay_fit",
];

fn header() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vpb.h")
}

#[test]
fn header_declares_every_entry_point() {
    let text = std::fs::read_to_string(header()).expect("generated header");
    for s in SYMBOLS {
        assert!(text.contains(&format!("{s}(")), "{s} missing from header");
    }
    assert!(text.contains("typedef struct VpbOperator VpbOperator;"));
    assert!(text.contains("VPB_STATUS_OK = 0"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::env::var("CC").or_else(|_| which("cc").ok_or(())) else {
        eprintln!("no C compiler found; syntax check skipped");
        return;
    };
    let dir = tempfile_dir();
    let src = dir.join("use_header.c");
    std::fs::write(
        &src,
        "#include \"vpb.h\"\nint main(void) { VpbOperator *op = 0; double w; return vpb_weight(0.0, 1.0, 0.0, 0.0, 0.01, 1.0, -1.0, &w) == VPB_STATUS_OK && vpb_operator_len(op) == 0 ? 0 : 1; }\n",
    )
    .unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let status = Command::new(cc).arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(include).arg(&src).status().unwrap();
    assert!(status.success());
}

fn which(name: &str) -> Option<String> {
    std::env::var_os("PATH")?.to_str()?.split(':').map(|d| Path::new(d).join(name)).find(|p| p.is_file()).map(|p| p.display().to_string())
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("vpb-header-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
