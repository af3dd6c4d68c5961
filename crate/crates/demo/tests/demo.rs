use atsd_demo::{draw_json, experiment_json, population_json, MAX_REPLICATES};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn population_grid_covers_every_cell() {
    let v = parse(population_json("population1", "").unwrap());
    let side = v["grid"]["side"].as_u64().unwrap() as usize;
    let cells = v["grid"]["cells"].as_array().unwrap();
    assert_eq!(cells.len(), side * side);
    let psus = v["grid"]["psus"].as_u64().unwrap() as f64;
    assert!(cells.iter().all(|c| (0.0..psus).contains(&c[0].as_f64().unwrap())));
    let mean = cells.iter().map(|c| c[1].as_f64().unwrap()).sum::<f64>() / cells.len() as f64;
    assert!((mean - v["mean_y"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn population_seed_override() {
    let default = parse(population_json("population2", " ").unwrap());
    let same = parse(population_json("population2", &default["seed"].to_string()).unwrap());
    assert_eq!(default, same);
    let other = parse(population_json("population2", "7").unwrap());
    assert_eq!(other["seed"], 7);
    assert_ne!(default["grid"], other["grid"]);
    assert!(population_json("population2", "-3").is_err());
    assert!(population_json("table2", "").is_err());
}

#[test]
fn draw_marks_roles_consistently() {
    let v = parse(draw_json("table2", 11).unwrap());
    let roles: Vec<u64> = v["roles"].as_array().unwrap().iter().map(|r| r.as_u64().unwrap()).collect();
    let count = |lo: u64| roles.iter().filter(|&&r| r >= lo).count();
    assert_eq!(count(2), v["n_aux"].as_u64().unwrap() as usize);
    assert_eq!(count(3), v["n_target"].as_u64().unwrap() as usize);
    assert!(count(1) > count(2));
    assert_eq!(v["estimates"].as_array().unwrap().len(), 3);
    assert_eq!(v, parse(draw_json("table2", 11).unwrap()));
}

#[test]
fn experiment_rows_and_limits() {
    let v = parse(experiment_json("table4", 50, 3).unwrap());
    let rows = v["rows"].as_array().unwrap();
    assert!(rows.iter().any(|r| r["estimator"] == "ybar_s" && r["eff"] == 1.0));
    assert_eq!(v, parse(experiment_json("table4", 50, 3).unwrap()));
    assert!(experiment_json("table4", 0, 3).is_err());
    assert!(experiment_json("table4", MAX_REPLICATES + 1, 3).is_err());
    assert!(experiment_json("population1", 10, 3).is_err());
}
