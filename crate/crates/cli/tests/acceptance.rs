//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line and
//! the process exits non-zero if any fails.

use std::f64::consts::{LN_2, TAU};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsv_core::bvh::{brute_force_first_hit, BvhIndex, Ray};
use nsv_core::mesh::{validate, write_obj, write_stl_binary, BedPlane, PrintSetup, TriangleMesh};
use nsv_core::metrics::{nsv_star, nsv_weighted, sec, DatasetScores, ScoreEntry};
use nsv_core::preference::toy::{evaluate_heldout, run_toy_alignment, ToyConfig};
use nsv_core::preference::{dpo_loss, loss_gradients, odpo_loss, AlignmentConfig, OffsetFn, PolicyLogProbs};
use nsv_core::records::{read_pairs, read_report_csv};
use nsv_core::shapes::{
    fixture_suite, inverted_cone, inverted_pyramid, translated, unit_cube, upright_pyramid, Tabletop,
};
use nsv_core::support::{classify_faces, simulate, voxel_support_oracle};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_time(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, format!("{what} took {took:?}, limit {limit:?}"))
}

fn nsv_cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nsv")).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn json_number(path: &Path, pointer: &str) -> f64 {
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    doc.pointer(pointer).and_then(|v| v.as_f64()).unwrap_or_else(|| panic!("{pointer} missing"))
}

fn frame() -> PrintSetup {
    PrintSetup::default().with_bed(BedPlane::At(0.0))
}

fn fixtures() -> Vec<TriangleMesh> {
    let mut meshes = fixture_suite(0.05);
    meshes.push(inverted_cone(1.0, 50.0, 64));
    meshes.push(Tabletop { overhang: 0.4, column_height: 1.0, column_volume: 1.0, slab_thickness: 0.3 }.mesh());
    meshes
}

fn c1_floating_cube(dir: &Path) -> Outcome {
    let start = Instant::now();
    let floating = dir.join("floating_cube.stl");
    let grounded = dir.join("grounded_cube.stl");
    fs::write(&floating, write_stl_binary(&translated(&unit_cube(), [0.0, 0.0, 0.5]))).unwrap();
    fs::write(&grounded, write_stl_binary(&unit_cube())).unwrap();
    let json = dir.join("floating.json");

    let (code, _, err) = nsv_cli(&["analyze", floating.to_str().unwrap(), "--bed-z", "0", "--json", json.to_str().unwrap()]);
    ensure(code == 0, format!("analyze failed: {err}"))?;
    let v_sup = json_number(&json, "/report/support_volume");
    let nsv = json_number(&json, "/report/nsv");
    ensure((v_sup - 0.5).abs() <= 0.5e-6, format!("V_sup {v_sup}"))?;
    ensure((nsv - 0.5).abs() <= 0.5e-6, format!("NSV {nsv}"))?;

    let json = dir.join("grounded.json");
    let (code, _, err) = nsv_cli(&["analyze", grounded.to_str().unwrap(), "--json", json.to_str().unwrap()]);
    ensure(code == 0, format!("analyze failed: {err}"))?;
    let grounded_sup = json_number(&json, "/report/support_volume");
    ensure(grounded_sup == 0.0, format!("grounded V_sup {grounded_sup}"))?;
    within_time(start, Duration::from_secs(1), "analysis")?;
    Ok(format!("floating V_sup {v_sup:.9}, NSV {nsv:.9}; grounded V_sup {grounded_sup}"))
}

fn c2_boundary_classification(dir: &Path) -> Outcome {
    let start = Instant::now();
    let pyramid = inverted_pyramid(1.0, 1.0);
    let c = classify_faces(&pyramid, &frame());
    ensure(c.risky_count == 0, format!("45 degree pyramid has {} risky faces", c.risky_count))?;
    let cone = inverted_cone(1.0, 50.0, 32);
    let cone_risky = classify_faces(&cone, &frame()).risky_count;
    ensure(cone_risky == 32, format!("50 degree cone has {cone_risky} risky faces, expected 32"))?;

    // a stricter angle turns the pyramid flanks risky
    let path = dir.join("pyramid.stl");
    fs::write(&path, write_stl_binary(&pyramid)).unwrap();
    let json = dir.join("pyramid.json");
    let (code, _, err) =
        nsv_cli(&["analyze", path.to_str().unwrap(), "--alpha-max", "30", "--json", json.to_str().unwrap()]);
    ensure(code == 0, format!("analyze failed: {err}"))?;
    let risky = json_number(&json, "/report/risky_count");
    let nsv = json_number(&json, "/report/nsv");
    ensure(risky == 4.0 && nsv > 0.0, format!("alpha 30: risky {risky}, NSV {nsv}"))?;
    within_time(start, Duration::from_secs(1), "classification")?;
    Ok(format!("pyramid 0 risky at 45 deg, 4 at 30 deg (NSV {nsv:.4}); cone {cone_risky}/32 flanks risky"))
}

fn c3_oracle_equivalence() -> Outcome {
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for mesh in fixtures() {
        let start = Instant::now();
        ensure(validate(&mesh).is_watertight, format!("{} is not watertight", mesh.source_name()))?;
        let columns = simulate(&mesh, &frame()).map_err(|e| e.to_string())?.support_volume;
        let voxels = voxel_support_oracle(&mesh, &frame(), 256).map_err(|e| e.to_string())?;
        within_time(start, Duration::from_secs(30), mesh.source_name())?;
        if columns.max(voxels) <= 1e-3 {
            continue;
        }
        let gap = (columns - voxels).abs() / voxels;
        ensure(gap <= 0.05, format!("{}: columns {columns}, voxels {voxels}, gap {gap}", mesh.source_name()))?;
        compared += 1;
        worst = worst.max(gap);
    }
    ensure(compared >= 10, format!("only {compared} fixtures need support"))?;
    Ok(format!("{compared} fixtures, worst relative gap {:.2}%", worst * 100.0))
}

fn c4_ray_soundness() -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    for seed in 0..5u64 {
        let mesh = nsv_core::shapes::random_soup(seed, 3000, 0.25);
        let bvh = BvhIndex::build(&mesh).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for i in 0..1000 {
            let origin = Point3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let dir = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let ray = Ray::new(origin, dir.normalize());
            match (bvh.first_hit(&mesh, &ray), brute_force_first_hit(&mesh, &ray)) {
                (None, None) => {}
                (Some(a), Some(b)) if a.face_id == b.face_id && (a.t - b.t).abs() <= 1e-9 * a.t.max(1.0) => hits += 1,
                other => return Err(format!("mesh {seed} ray {i}: {other:?}")),
            }
        }
    }
    within_time(start, Duration::from_secs(10), "ray batch")?;
    Ok(format!("5000 rays agree ({hits} hits)"))
}

fn c5_invariances() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for mesh in fixtures() {
        let base = simulate(&mesh, &frame()).map_err(|e| e.to_string())?.nsv;
        let scaled = [0.5, 2.0, 10.0].map(|s| mesh.map_vertices(|p| Point3::from(p.coords * s)).unwrap());
        let rotated = [0.3, 1.0, 2.5, TAU / 4.0, 4.0].map(|a| {
            let r = Rotation3::from_axis_angle(&Vector3::z_axis(), a);
            mesh.map_vertices(|p| r * p).unwrap()
        });
        for variant in scaled.iter().chain(&rotated) {
            let n = simulate(variant, &frame()).map_err(|e| e.to_string())?.nsv;
            worst = worst.max((n - base).abs());
        }
        count += 1;
    }
    ensure(worst <= 1e-6, format!("NSV moved by {worst}"))?;
    Ok(format!("{count} fixtures x 8 transforms, max |dNSV| {worst:.2e}"))
}

fn random_lp(rng: &mut ChaCha8Rng) -> PolicyLogProbs {
    PolicyLogProbs {
        logp_w: rng.gen_range(-20.0..20.0),
        logp_l: rng.gen_range(-20.0..20.0),
        ref_logp_w: rng.gen_range(-20.0..20.0),
        ref_logp_l: rng.gen_range(-20.0..20.0),
    }
}

fn c6_loss_correctness() -> Outcome {
    let start = Instant::now();
    let zero = PolicyLogProbs { logp_w: 0.0, logp_l: 0.0, ref_logp_w: 0.0, ref_logp_l: 0.0 };
    let at_zero = dpo_loss(&zero, 1.0);
    ensure((at_zero - LN_2).abs() <= 1e-12, format!("dpo(0) = {at_zero}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..10_000 {
        let lp = random_lp(&mut rng);
        let beta = rng.gen_range(0.01..5.0);
        let (dpo, odpo0) = (dpo_loss(&lp, beta), odpo_loss(&lp, 0.0, beta));
        ensure(dpo.to_bits() == odpo0.to_bits(), format!("input {i}: {dpo} vs {odpo0}"))?;
        let offset = rng.gen_range(1e-6..5.0);
        ensure(odpo_loss(&lp, offset, beta) >= dpo, format!("input {i}: offset lowered the loss"))?;
    }

    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let lp = random_lp(&mut rng);
        let (offset, beta) = (rng.gen_range(0.0..3.0), rng.gen_range(0.1..2.0));
        let g = loss_gradients(&lp, offset, beta);
        let analytic = [g.logp_w, g.logp_l, g.ref_logp_w, g.ref_logp_l];
        for (k, a) in analytic.into_iter().enumerate() {
            let shifted = |h: f64| {
                let mut p = lp;
                match k {
                    0 => p.logp_w += h,
                    1 => p.logp_l += h,
                    2 => p.ref_logp_w += h,
                    _ => p.ref_logp_l += h,
                }
                odpo_loss(&p, offset, beta)
            };
            let h = 1e-5;
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let err = (a - fd).abs() / a.abs().max(1.0);
            ensure(err <= 1e-6, format!("input {i} partial {k}: analytic {a}, numeric {fd}"))?;
            worst = worst.max(err);
        }
    }
    within_time(start, Duration::from_secs(5), "loss checks")?;
    Ok(format!("dpo(0) = ln 2, 10^4 bitwise matches, 10^3 gradients (worst rel err {worst:.1e})"))
}

fn write_report(path: &Path, rows: &[(&str, &str, f64)]) {
    let mut text = String::from(
        "version,prompt_id,sample_id,file,mesh_volume,support_volume,nsv,risky_count,risky_area,watertight\n",
    );
    for (prompt, sample, nsv) in rows {
        text.push_str(&format!("1,{prompt},{sample},m.stl,1.0,{nsv},{nsv},1,0.5,true\n"));
    }
    fs::write(path, text).unwrap();
}

fn pairs_via_cli(report: &Path, out: &Path, extra: &[&str]) -> Result<Vec<nsv_core::preference::PreferencePair>, String> {
    let mut args = vec!["pairs", report.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, _, err) = nsv_cli(&args);
    ensure(code == 0, format!("pairs failed: {err}"))?;
    read_pairs(fs::File::open(out).unwrap()).map_err(|e| e.to_string())
}

fn c7_pair_construction(dir: &Path) -> Outcome {
    let ten: Vec<(String, f64)> = (0..10).map(|i| (i.to_string(), 0.1 + 0.07 * i as f64)).collect();
    let rows: Vec<(&str, &str, f64)> = ten.iter().map(|(s, n)| ("p", s.as_str(), *n)).collect();
    let report = dir.join("ten.csv");
    write_report(&report, &rows);
    let pairs = pairs_via_cli(&report, &dir.join("ten_pairs.csv"), &[])?;
    ensure(pairs.len() == 45, format!("{} pairs from 10 samples", pairs.len()))?;
    ensure(pairs.iter().all(|p| p.offset > 0.0), "log1p offsets should be positive")?;

    let tied = dir.join("tied.csv");
    write_report(&tied, &[("p", "a", 0.2), ("p", "b", 0.2005), ("p", "c", 0.6)]);
    let pairs = pairs_via_cli(&tied, &dir.join("tied_pairs.csv"), &[])?;
    let got: Vec<(&str, &str)> = pairs.iter().map(|p| (p.winner_id.as_str(), p.loser_id.as_str())).collect();
    ensure(got == [("a", "c"), ("b", "c")], format!("tie handling gave {got:?}"))?;

    let flat = dir.join("ten_alpha0.csv");
    let pairs = pairs_via_cli(&report, &flat, &["--alpha", "0"])?;
    ensure(pairs.len() == 45 && pairs.iter().all(|p| p.offset == 0.0), "alpha 0 must zero every offset")?;
    Ok("45 pairs from 10 samples; 0.0005 gap excluded; alpha 0 gives zero offsets".into())
}

fn c8_toy_alignment() -> Outcome {
    let start = Instant::now();
    let toy = ToyConfig { steps: 200, seed: 0, ..Default::default() };
    let full = run_toy_alignment(&AlignmentConfig::default(), &toy).map_err(|e| e.to_string())?;
    let ratio = full.final_mean_nsv() / full.initial_mean_nsv();
    ensure(ratio <= 0.5, format!("mean NSV only fell to {ratio:.3} of its start"))?;

    let (trained, initial) = evaluate_heldout(full.final_mean, full.initial_mean, &toy, 60).map_err(|e| e.to_string())?;
    let cmp = sec(&trained, &initial, 1e-3).map_err(|e| e.to_string())?;
    ensure(cmp.compared() == 60 && cmp.sec >= 0.8, format!("held-out SEC {} over {}", cmp.sec, cmp.compared()))?;

    let plain = AlignmentConfig { offset_fn: OffsetFn::None, ..Default::default() };
    let no_offset = run_toy_alignment(&plain, &toy).map_err(|e| e.to_string())?;
    ensure(
        no_offset.final_mean_nsv() > full.final_mean_nsv(),
        format!("without offset {} vs with {}", no_offset.final_mean_nsv(), full.final_mean_nsv()),
    )?;
    within_time(start, Duration::from_secs(60), "toy alignment")?;
    Ok(format!(
        "mean NSV {:.4} -> {:.4} ({:.1}%), held-out SEC {:.3}, without offset {:.4}",
        full.initial_mean_nsv(),
        full.final_mean_nsv(),
        100.0 * (1.0 - ratio),
        cmp.sec,
        no_offset.final_mean_nsv()
    ))
}

fn c9_metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let entries: Vec<ScoreEntry> = (0..40)
        .map(|i| ScoreEntry::new(format!("p{}", i % 13), i.to_string(), rng.gen_range(0.1..5.0), rng.gen_range(0.0..3.0)))
        .collect();
    let data = DatasetScores::new(entries);
    let self_sec = sec(&data, &data, 1e-3).map_err(|e| e.to_string())?.sec;
    ensure(self_sec == 1.0, format!("sec(A, A) = {self_sec}"))?;

    let direct = data.entries.iter().map(|e| e.support_volume).sum::<f64>()
        / data.entries.iter().map(|e| e.mesh_volume).sum::<f64>();
    let weighted = nsv_weighted(&data).map_err(|e| e.to_string())?;
    ensure((weighted - direct).abs() <= 1e-12, format!("weighted {weighted} vs {direct}"))?;

    let hand = DatasetScores::new(vec![ScoreEntry::new("a", "0", 1.0, 0.5), ScoreEntry::new("b", "0", 3.0, 0.3)]);
    let (w, star) = (nsv_weighted(&hand).unwrap(), nsv_star(&hand).unwrap());
    ensure((w - 0.2).abs() <= 1e-12 && (star - 0.3).abs() <= 1e-12, format!("hand example {w}, {star}"))?;
    Ok(format!("sec(A, A) = 1, weighted identity holds, hand example {w:.3} / {star:.3}"))
}

fn manifest_meshes() -> Vec<TriangleMesh> {
    let mut meshes = fixture_suite(0.2);
    for i in 0..15 {
        let t = Tabletop {
            overhang: 0.05 * i as f64,
            column_height: 0.4 + 0.1 * (i % 7) as f64,
            column_volume: 1.0,
            slab_thickness: 0.2 + 0.01 * i as f64,
        };
        meshes.push(t.mesh());
    }
    for i in 0..10 {
        let s = 0.5 + 0.1 * i as f64;
        meshes.push(inverted_pyramid(s, 1.0));
        meshes.push(upright_pyramid(s, 1.0 + s));
    }
    meshes.push(inverted_cone(1.0, 50.0, 24));
    meshes.push(nsv_core::shapes::icosphere(0.7, 2));
    meshes
}

fn c10_batch_determinism(dir: &Path) -> Outcome {
    let meshes = manifest_meshes();
    ensure(meshes.len() == 50, format!("{} meshes", meshes.len()))?;
    fs::create_dir_all(dir.join("meshes")).unwrap();
    let mut manifest = String::from("# prompt_id\tprompt_text\tmesh_path\n");
    for (i, mesh) in meshes.iter().enumerate() {
        let name = if i % 3 == 0 {
            let name = format!("meshes/m{i:02}.obj");
            fs::write(dir.join(&name), write_obj(mesh)).unwrap();
            name
        } else {
            let name = format!("meshes/m{i:02}.stl");
            fs::write(dir.join(&name), write_stl_binary(mesh)).unwrap();
            name
        };
        manifest.push_str(&format!("prompt{}\t{}\t{name}\n", i / 5, mesh.source_name()));
    }
    let manifest_path = dir.join("manifest.tsv");
    fs::write(&manifest_path, manifest).unwrap();

    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.join(format!("report_{threads}.csv"));
        let (code, _, err) = nsv_cli(&[
            "batch",
            manifest_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--parallel",
            threads,
        ]);
        ensure(code == 0, format!("batch --parallel {threads} failed: {err}"))?;
        outputs.push(fs::read(&out).unwrap());
    }
    ensure(outputs[0] == outputs[1], "CSV differs between --parallel 1 and --parallel 8")?;
    let rows = read_report_csv(outputs[0].as_slice()).map_err(|e| e.to_string())?;
    ensure(rows.len() == 50, format!("{} rows", rows.len()))?;
    Ok(format!("50 rows, {} bytes identical across 1 and 8 workers", outputs[0].len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = dir.path();
    let criteria: Vec<Criterion> = vec![
        ("analytic support volume", Box::new(|| c1_floating_cube(d))),
        ("boundary classification", Box::new(|| c2_boundary_classification(d))),
        ("oracle equivalence", Box::new(c3_oracle_equivalence)),
        ("ray-cast soundness", Box::new(c4_ray_soundness)),
        ("NSV invariances", Box::new(c5_invariances)),
        ("loss correctness", Box::new(c6_loss_correctness)),
        ("pair construction", Box::new(|| c7_pair_construction(d))),
        ("toy alignment efficacy", Box::new(c8_toy_alignment)),
        ("metric identities", Box::new(c9_metric_identities)),
        ("batch determinism", Box::new(|| c10_batch_determinism(d))),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{took:.2?}]", i + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
