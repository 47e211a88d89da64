//! Tabular and JSON renderings of analysis results.
//!
//! All CSV output uses `,` separators, `.` decimals and `\n` line endings.

use repstab_core::align::DelayedScan;
use repstab_core::brainprep::{RegionRanking, VoxelMask};
use repstab_core::encode::CvReport;
use repstab_core::resta::{RsaGrid, StabilityCurve};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub fn curve_csv(curve: &StabilityCurve) -> String {
    let mut s = String::from("context_length,value\n");
    for p in &curve.points {
        s.push_str(&format!("{},{}\n", p.context_length, p.value));
    }
    s
}

pub fn curve_json(curve: &StabilityCurve) -> Result<Value> {
    Ok(serde_json::to_value(curve)?)
}

pub fn grid_csv(grid: &RsaGrid) -> String {
    let mut s = String::from("row_label,col_label,value\n");
    for (i, a) in grid.labels.iter().enumerate() {
        for (j, b) in grid.labels.iter().enumerate() {
            s.push_str(&format!("{a},{b},{}\n", grid.values.get(i, j)));
        }
    }
    s
}

pub fn grid_json(grid: &RsaGrid) -> Value {
    let rows: Vec<Vec<f64>> = grid.values.row_iter().map(<[f64]>::to_vec).collect();
    json!({ "labels": grid.labels, "values": rows })
}

pub fn ranking_csv(r: &RegionRanking) -> String {
    let mut s = String::from("region_label,score\n");
    for (label, score) in &r.entries {
        s.push_str(&format!("{label},{score}\n"));
    }
    s
}

pub fn ranking_json(r: &RegionRanking) -> Value {
    json!({
        "k": r.k,
        "entries": r.entries.iter().map(|(l, v)| json!({"region_label": l, "score": v})).collect::<Vec<_>>(),
        "skipped": r.skipped.iter().map(|s| json!({"region_label": s.label, "reason": s.reason})).collect::<Vec<_>>(),
    })
}

pub fn voxel_mask_csv(mask: &VoxelMask, regions: &[String]) -> String {
    let mut s = String::from("voxel_index,region_label,keep\n");
    for (j, (k, r)) in mask.keep.iter().zip(regions).enumerate() {
        s.push_str(&format!("{j},{r},{}\n", u8::from(*k)));
    }
    s
}

/// Parses `index,value` rows (header optional) into a boolean vector.
/// Values may be `1/0` or `true/false`; indices must be `0..n` in order.
pub fn parse_mask_csv(text: &str) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::Format(format!("mask line {}: expected index,value", n + 1)));
        }
        let Ok(idx) = fields[0].parse::<usize>() else {
            if n == 0 {
                continue;
            }
            return Err(Error::Format(format!("mask line {}: bad index {:?}", n + 1, fields[0])));
        };
        if idx != out.len() {
            return Err(Error::Format(format!("mask line {}: index {idx} out of order", n + 1)));
        }
        let v = match fields[fields.len() - 1] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::Format(format!("mask line {}: bad value {other:?}", n + 1))),
        };
        out.push(v);
    }
    Ok(out)
}

pub fn mask_csv(mask: &[bool]) -> String {
    let mut s = String::from("index,value\n");
    for (i, m) in mask.iter().enumerate() {
        s.push_str(&format!("{i},{}\n", u8::from(*m)));
    }
    s
}

/// One row per associated scan, with any number of named boolean columns.
pub fn alignment_csv(assoc: &[DelayedScan], masks: &[(&str, Vec<bool>)]) -> String {
    let mut s = String::from("scan_index,window_index,word_indices");
    for (name, _) in masks {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for (i, a) in assoc.iter().enumerate() {
        let words: Vec<String> = a.word_indices().map(|w| w.to_string()).collect();
        s.push_str(&format!("{},{},{}", a.scan_index, a.window_index, words.join(" ")));
        for (_, m) in masks {
            s.push_str(&format!(",{}", u8::from(m[i])));
        }
        s.push('\n');
    }
    s
}

pub fn alignment_json(assoc: &[DelayedScan], masks: &[(&str, Vec<bool>)]) -> Value {
    let rows: Vec<Value> = assoc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut v = json!({
                "scan_index": a.scan_index,
                "window_index": a.window_index,
                "word_indices": a.word_indices().collect::<Vec<_>>(),
            });
            for (name, m) in masks {
                v[*name] = json!(m[i]);
            }
            v
        })
        .collect();
    Value::Array(rows)
}

/// Held-out EV per voxel averaged over folds.
pub fn voxel_ev(report: &CvReport) -> Vec<f64> {
    let v = report.folds[0].score.per_voxel_ev.len();
    let k = report.folds.len() as f64;
    (0..v)
        .map(|j| repstab_core::sum::sum_by(report.folds.len(), &|f| report.folds[f].score.per_voxel_ev[j]) / k)
        .collect()
}

pub fn voxel_ev_csv(ev: &[f64], regions: &[String]) -> String {
    let mut s = String::from("voxel_index,region_label,ev\n");
    for (j, (e, r)) in ev.iter().zip(regions).enumerate() {
        s.push_str(&format!("{j},{r},{e}\n"));
    }
    s
}

pub fn region_ev_csv(ev: &[f64], regions: &[String]) -> String {
    let mut groups: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    for (e, r) in ev.iter().zip(regions) {
        groups.entry(r).or_default().push(*e);
    }
    let mut s = String::from("region_label,mean_ev\n");
    for (r, v) in groups {
        s.push_str(&format!("{r},{}\n", repstab_core::sum::sum(&v) / v.len() as f64));
    }
    s
}

pub fn folds_json(report: &CvReport, delay_s: f64) -> Value {
    json!({
        "delay_s": delay_s,
        "mean_ev": report.mean_ev,
        "folds": report.folds.iter().map(|f| json!({
            "held_out_block": f.held_out,
            "lambda": f.lambda,
            "mean_ev": f.score.mean_ev,
            "per_region_ev": f.score.per_region_ev,
        })).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_csv_round_trip() {
        let m = vec![true, false, true];
        assert_eq!(parse_mask_csv(&mask_csv(&m)).unwrap(), m);
        assert_eq!(parse_mask_csv("0,true\n1,false\n").unwrap(), vec![true, false]);
        assert!(parse_mask_csv("index,value\n1,1\n").is_err());
    }
}
