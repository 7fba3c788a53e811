use pcar_core::stats::{mean_of_means, pearson, pss_trend, t_quantile, welch_t, Observation};
use serde_json::Value;

fn golden() -> Value {
    serde_json::from_str(include_str!("golden/stats.json")).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn close(got: f64, want: f64) {
    let rel = (got - want).abs() / want.abs().max(1e-300);
    assert!(rel < 1e-9, "got {got}, want {want}, rel {rel}");
}

#[test]
fn welch_matches_high_precision_fixtures() {
    let g = golden();
    for name in ["welch_small", "welch_unequal", "welch_wide"] {
        let f = &g[name];
        let r = welch_t(&floats(&f["x"]), &floats(&f["y"])).unwrap();
        close(r.t, f["t"].as_f64().unwrap());
        close(r.df, f["df"].as_f64().unwrap());
        close(r.p, f["p"].as_f64().unwrap());
    }
}

#[test]
fn equal_variance_shift_matches_pooled_t() {
    let f = &golden()["pooled_shift"];
    let r = welch_t(&floats(&f["x"]), &floats(&f["y"])).unwrap();
    close(r.t, f["t"].as_f64().unwrap());
}

#[test]
fn pearson_matches_fixture() {
    let f = &golden()["pearson"];
    close(pearson(&floats(&f["x"]), &floats(&f["y"])).unwrap(), f["r"].as_f64().unwrap());
}

#[test]
fn pss_trend_matches_fixture() {
    let f = &golden()["pss"];
    let s = pss_trend(&floats(&f["scores"])).unwrap();
    assert!((s - f["slope"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn mean_of_means_matches_fixture() {
    let f = &golden()["mean_of_means"];
    close(t_quantile(0.975, 4.0).unwrap(), f["t975_df4"].as_f64().unwrap());
    let mut obs = Vec::new();
    for (pid, vals) in f["records"].as_object().unwrap() {
        for v in floats(vals) {
            obs.push(Observation {
                group: "pcar".into(),
                phase: 2,
                week: 3,
                metric: "reward".into(),
                participant: pid.clone(),
                value: v,
            });
        }
    }
    let rows = mean_of_means(&obs).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!(r.n_participants, 5);
    close(r.mean, f["mean"].as_f64().unwrap());
    close(r.ci_low, f["ci_low"].as_f64().unwrap());
    close(r.ci_high, f["ci_high"].as_f64().unwrap());
}
