use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use policy_poison::data::{generate_lqr_dataset, write_continuous_csv};
use policy_poison::experiments::{vehicle_start, VEHICLE_NOISE, VEHICLE_STEPS};
use policy_poison::lqr::{vehicle_dynamics, vehicle_true_loss, VehicleParams};
use policy_poison_ffi::*;

fn last_error() -> String {
    let p = pp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// One state, two self-looping actions paying 1 and 0. Making action 1 win by
/// ε needs r₁ − r₀ to grow by 1 + ε.
fn two_arm_dataset() -> *mut PpTabularDataset {
    let (s, a, r, sn) = ([0usize, 0], [0usize, 1], [1.0, 0.0], [0usize, 0]);
    let mut out = ptr::null_mut();
    let st = unsafe { pp_tabular_dataset_new(1, 2, s.as_ptr(), a.as_ptr(), r.as_ptr(), sn.as_ptr(), 2, &mut out) };
    assert_eq!(st, PpStatus::Ok);
    out
}

#[test]
fn tabular_attack_matches_closed_form_costs() {
    let data = two_arm_dataset();
    assert_eq!(unsafe { pp_tabular_dataset_len(data) }, 2);
    let eps = 0.5;
    let gap: f64 = 1.0 + eps;
    for (norm, expected) in [
        (PpNorm::L1, gap),
        (PpNorm::L2, gap / 2f64.sqrt()),
        (PpNorm::LInf, gap / 2.0),
    ] {
        let mut attack = ptr::null_mut();
        let st = unsafe { pp_tce_attack(data, 0.9, [1usize].as_ptr(), 1, eps, norm as u32, &mut attack) };
        assert_eq!(st, PpStatus::Ok, "{}", last_error());
        let mut cost = f64::NAN;
        assert_eq!(unsafe { pp_tce_attack_cost(attack, &mut cost) }, PpStatus::Ok);
        assert!((cost - expected).abs() < 1e-6, "{norm:?}: {cost} vs {expected}");
        let mut r = [0.0; 2];
        assert_eq!(unsafe { pp_tce_attack_rewards(attack, r.as_mut_ptr(), 2) }, PpStatus::Ok);
        assert!(r[1] - r[0] >= eps - 1e-6);
        let mut passed = false;
        assert_eq!(unsafe { pp_tce_attack_verify(attack, data, &mut passed) }, PpStatus::Ok);
        assert!(passed);
        let json = unsafe { pp_tce_attack_json(attack) };
        let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
        assert!(text.contains("poisoned_rewards"));
        unsafe {
            pp_string_free(json);
            pp_tce_attack_free(attack);
        }
    }
    unsafe { pp_tabular_dataset_free(data) };
}

#[test]
fn errors_carry_status_and_message() {
    let data = two_arm_dataset();
    let mut attack = ptr::null_mut();
    let st = unsafe { pp_tce_attack(data, 0.9, [1usize].as_ptr(), 1, 0.5, 7, &mut attack) };
    assert_eq!(st, PpStatus::InvalidArgument);
    assert!(last_error().contains("norm"));
    assert!(attack.is_null());

    let st = unsafe { pp_tce_attack(data, 0.9, [5usize].as_ptr(), 1, 0.5, 2, &mut attack) };
    assert_ne!(st, PpStatus::Ok);

    let st = unsafe { pp_tce_attack(ptr::null(), 0.9, [1usize].as_ptr(), 1, 0.5, 2, &mut attack) };
    assert_eq!(st, PpStatus::NullPointer);

    let st = unsafe { pp_tce_attack(data, 0.9, [1usize].as_ptr(), 1, 0.5, 2, &mut attack) };
    assert_eq!(st, PpStatus::Ok);
    assert!(pp_last_error_message().is_null());
    let mut short = [0.0; 1];
    let st = unsafe { pp_tce_attack_rewards(attack, short.as_mut_ptr(), 1) };
    assert_eq!(st, PpStatus::InvalidArgument);

    let missing = CString::new("/nonexistent/data.csv").unwrap();
    let mut other = ptr::null_mut();
    assert_eq!(unsafe { pp_tabular_dataset_read(missing.as_ptr(), &mut other) }, PpStatus::IoError);

    unsafe {
        pp_tce_attack_free(attack);
        pp_tabular_dataset_free(data);
        pp_tce_attack_free(ptr::null_mut());
    }
}

#[test]
fn vehicle_regulator_gain() {
    let dyn_ = vehicle_dynamics(&VehicleParams::default(), 0.0).unwrap();
    let loss = vehicle_true_loss();
    let row_major = |m: &nalgebra::DMatrix<f64>| m.transpose().as_slice().to_vec();
    let (mut gain, mut offset) = ([0.0; 8], [1.0; 2]);
    let st = unsafe {
        pp_lqr_optimal_policy(
            4,
            2,
            row_major(&dyn_.a).as_ptr(),
            row_major(&dyn_.b).as_ptr(),
            row_major(&loss.q_mat).as_ptr(),
            row_major(&loss.r_mat).as_ptr(),
            loss.q_vec.as_ptr(),
            loss.c,
            0.9,
            gain.as_mut_ptr(),
            offset.as_mut_ptr(),
        )
    };
    assert_eq!(st, PpStatus::Ok, "{}", last_error());
    let published = [-1.32, 0.0, -2.39, 0.0, 0.0, -1.32, 0.0, -2.39];
    for (g, p) in gain.iter().zip(published) {
        assert!((g - p).abs() < 0.005, "{gain:?}");
    }
    assert!(offset.iter().all(|k| k.abs() < 1e-12));
}

#[test]
fn lqr_attack_through_handles() {
    let truth = vehicle_dynamics(&VehicleParams::default(), VEHICLE_NOISE).unwrap();
    let clean = generate_lqr_dataset(&truth, &vehicle_true_loss(), &vehicle_start(), VEHICLE_STEPS, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clean.csv");
    write_continuous_csv(&clean, std::fs::File::create(&path).unwrap()).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut data = ptr::null_mut();
    assert_eq!(unsafe { pp_continuous_dataset_read(cpath.as_ptr(), &mut data) }, PpStatus::Ok);
    assert_eq!(unsafe { pp_continuous_dataset_len(data) }, VEHICLE_STEPS);

    let goal = [0.0, 1.0, 0.0, 0.0];
    let mut attack = ptr::null_mut();
    let st = unsafe { pp_lqr_attack(data, goal.as_ptr(), 4, 0.1, 0.01, 0.9, PpNorm::L2 as u32, &mut attack) };
    assert_eq!(st, PpStatus::Ok, "{}", last_error());
    let mut cost = 0.0;
    assert_eq!(unsafe { pp_lqr_attack_cost(attack, &mut cost) }, PpStatus::Ok);
    let mut rewards = vec![0.0; VEHICLE_STEPS];
    assert_eq!(unsafe { pp_lqr_attack_rewards(attack, rewards.as_mut_ptr(), VEHICLE_STEPS) }, PpStatus::Ok);
    let moved: f64 = rewards
        .iter()
        .zip(clean.items())
        .map(|(r, it)| (r - it.r).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!((moved - cost).abs() < 1e-9 * (1.0 + cost));
    let (mut gain, mut offset) = ([0.0; 8], [0.0; 2]);
    let st = unsafe { pp_lqr_attack_learned_policy(attack, gain.as_mut_ptr(), 8, offset.as_mut_ptr(), 2) };
    assert_eq!(st, PpStatus::Ok);
    assert!(offset.iter().any(|k| k.abs() > 0.1), "goal shift needs an offset");
    let mut passed = false;
    assert_eq!(unsafe { pp_lqr_attack_verify(attack, data, &mut passed) }, PpStatus::Ok);
    assert!(passed);
    unsafe {
        pp_lqr_attack_free(attack);
        pp_continuous_dataset_free(data);
    }
}

/// Compiles a C program against the generated header and links it to the
/// shared library built for this test run.
#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = crate_dir.join("include");
    assert!(header_dir.join("policy_poison.h").exists());
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    // `cargo test` links tests against the rlib only, so build the shared
    // library into the same target directory first.
    let mut build = Command::new(env!("CARGO"));
    build
        .args(["build", "--quiet", "-p", "policy-poison-ffi", "--lib", "--target-dir"])
        .arg(profile_dir.parent().unwrap())
        .current_dir(&crate_dir);
    if profile_dir.ends_with("release") {
        build.arg("--release");
    }
    let status = build.status().unwrap();
    assert!(status.success());
    let lib = profile_dir.join("libpolicy_poison_ffi.so");
    assert!(lib.exists(), "missing {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <math.h>
#include "policy_poison.h"

int main(void) {
    size_t s[2] = {0, 0}, a[2] = {0, 1}, sn[2] = {0, 0}, target[1] = {1};
    double r[2] = {1.0, 0.0}, out_r[2], cost = 0.0;
    PpTabularDataset *data = NULL;
    PpTceAttack *attack = NULL;
    bool passed = false;
    if (pp_tabular_dataset_new(1, 2, s, a, r, sn, 2, &data) != PP_STATUS_OK) return 10;
    if (pp_tce_attack(data, 0.9, target, 1, 0.5, PP_NORM_L_INF, &attack) != PP_STATUS_OK) return 11;
    if (pp_tce_attack_cost(attack, &cost) != PP_STATUS_OK) return 12;
    if (pp_tce_attack_rewards(attack, out_r, 2) != PP_STATUS_OK) return 13;
    if (pp_tce_attack_verify(attack, data, &passed) != PP_STATUS_OK || !passed) return 14;
    if (pp_tce_attack_rewards(attack, out_r, 1) != PP_STATUS_INVALID_ARGUMENT) return 15;
    if (pp_last_error_message() == NULL) return 16;
    printf("%s %.6f\n", pp_version(), cost);
    pp_tce_attack_free(attack);
    pp_tabular_dataset_free(data);
    return fabs(cost - 0.75) < 1e-6 ? 0 : 17;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let cc = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg("-L")
        .arg(&profile_dir)
        .arg("-lpolicy_poison_ffi")
        .arg("-lm")
        .arg(format!("-Wl,-rpath,{}", profile_dir.display()))
        .arg("-o")
        .arg(&bin)
        .output()
        .expect("a C compiler on PATH");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.starts_with(env!("CARGO_PKG_VERSION")), "{stdout}");
}
