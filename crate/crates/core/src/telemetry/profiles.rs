//! Synthetic day profiles: per-bus demand and per-plant available solar
//! power, one sample per minute of the recorded window.
//!
//! Demand is built bottom-up from a fixed population of customers per bus
//! (drawn once per dataset) riding a shared diurnal shape, each with its
//! own bounded AR(1) wiggle and occasional appliance spikes. Solar
//! availability is a clear-sky bell over the solar day attenuated by a
//! shared cloud field with small per-plant jitter. Both processes are
//! smooth on the minute scale by construction; that temporal coherence is
//! what the detectors ultimately key on, so don't add white noise here
//! (metering noise is applied downstream, per reading).

use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::grid::{NetworkModel, PvPlacement};
use crate::telemetry::rng::derive_rng;
use crate::telemetry::TelemetryError;

/// Length of the recorded window; one frame per minute.
pub const MINUTES_PER_DAY: usize = 720;

/// The recorded window sits inside a longer solar day so plants still
/// produce at the window edges.
pub const SOLAR_DAY_MIN: f64 = 840.0;
pub const SOLAR_INSET_MIN: f64 = 60.0;
pub const BELL_EXPONENT: f64 = 1.1;

/// Feeder-total ceilings; synthesis scales a minute down if it would
/// exceed either.
pub const MAX_TOTAL_LOAD_P_KW: f64 = 3802.19;
pub const MAX_TOTAL_LOAD_Q_KVAR: f64 = 2964.6;

/// All demand is drawn at this fixed lagging power factor.
pub const LOAD_POWER_FACTOR: f64 = 0.78;

/// Feeder-total demand at diurnal shape 1.0, before per-customer noise.
pub const PEAK_TOTAL_LOAD_KW: f64 = 2500.0;

pub const HOUSEHOLDS_RANGE: (u32, u32) = (4, 10);
pub const HOUSEHOLD_WEIGHT_RANGE: (f64, f64) = (0.5, 1.5);
pub const LOAD_AR1_RHO: f64 = 0.97;
pub const LOAD_AR1_STD: f64 = 0.25;
pub const LOAD_NOISE_FLOOR: f64 = 0.05;
pub const SPIKES_PER_DAY_MAX: u32 = 2;
pub const SPIKE_AMP_KW: (f64, f64) = (0.5, 2.0);
pub const SPIKE_DURATION_MIN: (u32, u32) = (5, 30);

/// Brief, shallow dips: the fleet sits in a mostly-clear climate. Long
/// overcast stretches would look exactly like curtailment in the feeder
/// aggregates, which no detector could untangle.
pub const CLOUD_EVENTS_MAX: u32 = 3;
pub const CLOUD_DEPTH: (f64, f64) = (0.08, 0.40);
pub const CLOUD_SIGMA_MIN: (f64, f64) = (8.0, 25.0);
pub const CLOUD_ATTEN_FLOOR: f64 = 0.30;
pub const PLANT_JITTER_RHO: f64 = 0.9;
pub const PLANT_JITTER_STD: f64 = 0.02;
pub const PLANT_ATTEN_RANGE: (f64, f64) = (0.25, 1.03);

/// tan(arccos(pf)) for the fixed load power factor.
pub fn load_tan_phi() -> f64 {
    (1.0 - LOAD_POWER_FACTOR * LOAD_POWER_FACTOR).sqrt() / LOAD_POWER_FACTOR
}

/// Clear-sky availability fraction at a recorded-window minute.
pub fn clear_sky_bell(minute: usize) -> f64 {
    let t = minute as f64 + SOLAR_INSET_MIN;
    (std::f64::consts::PI * t / SOLAR_DAY_MIN).sin().powf(BELL_EXPONENT)
}

/// Shared diurnal demand shape: a morning bump and a taller early-evening
/// peak near the end of the window.
pub fn diurnal_shape(minute: usize) -> f64 {
    let m = minute as f64;
    0.5 + 0.2 * (-((m - 120.0) / 90.0).powi(2)).exp()
        + 0.45 * (-((m - 660.0) / 120.0).powi(2)).exp()
}

/// Customer composition per load bus, fixed for the life of a dataset.
#[derive(Debug, Clone)]
pub struct CustomerMix {
    /// `customer_base_kw[i][c]`: steady base of customer `c` on the i-th
    /// load bus (model load-bus order).
    pub customer_base_kw: Vec<Vec<f64>>,
}

impl CustomerMix {
    pub fn bus_base_kw(&self, i: usize) -> f64 {
        self.customer_base_kw[i].iter().sum()
    }
}

/// Split `PEAK_TOTAL_LOAD_KW` across buses by household count: each load
/// bus hosts 4-10 households of uneven size, and a bus's share is simply
/// the sum of its household weights. Every meter therefore matters; no
/// single bus dominates the feeder total.
pub fn sample_customer_mix(model: &NetworkModel, seed: u64) -> CustomerMix {
    let load_buses = model.load_buses();
    let mut rng = derive_rng(seed, super::rng::DATASET_STREAM, "households");
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(load_buses.len());
    for _ in load_buses {
        let n = rng.random_range(HOUSEHOLDS_RANGE.0..=HOUSEHOLDS_RANGE.1) as usize;
        units.push(
            (0..n)
                .map(|_| rng.random_range(HOUSEHOLD_WEIGHT_RANGE.0..HOUSEHOLD_WEIGHT_RANGE.1))
                .collect(),
        );
    }
    let unit_sum: f64 = units.iter().flatten().sum();
    let scale = PEAK_TOTAL_LOAD_KW / unit_sum;
    let customer_base_kw = units
        .into_iter()
        .map(|parts| parts.into_iter().map(|u| u * scale).collect())
        .collect();
    CustomerMix { customer_base_kw }
}

/// One recorded day: demand per load bus and availability per plant.
#[derive(Debug, Clone, PartialEq)]
pub struct DayProfiles {
    pub day: u32,
    /// `[minute, load bus]`, kW.
    pub load_p_kw: Array2<f64>,
    /// `[minute, load bus]`, kvar; always `p * tan(arccos(pf))`.
    pub load_q_kvar: Array2<f64>,
    /// `[minute, plant]`, kW available at the DC side.
    pub avail_kw: Array2<f64>,
}

/// Bounded AR(1) path with the given stationary std, uniform innovations.
fn ar1_path(len: usize, rho: f64, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let half_width = std * 3.0_f64.sqrt();
    let innov = half_width * (1.0 - rho * rho).sqrt();
    let mut x = rng.random_range(-half_width..half_width);
    (0..len)
        .map(|_| {
            let out = x;
            x = rho * x + rng.random_range(-innov..innov);
            out
        })
        .collect()
}

pub fn synth_day(
    model: &NetworkModel,
    placements: &[PvPlacement],
    mix: &CustomerMix,
    seed: u64,
    day: u32,
) -> DayProfiles {
    let n_load = mix.customer_base_kw.len();
    assert_eq!(n_load, model.load_buses().len(), "mix must match the model");
    let minutes = MINUTES_PER_DAY;
    let tan_phi = load_tan_phi();

    let mut rng = derive_rng(seed, day as u64, "loads");
    let mut load_p = Array2::<f64>::zeros((minutes, n_load));
    for (i, customers) in mix.customer_base_kw.iter().enumerate() {
        for &base in customers {
            let wiggle = ar1_path(minutes, LOAD_AR1_RHO, LOAD_AR1_STD, &mut rng);
            let n_spikes = rng.random_range(0..=SPIKES_PER_DAY_MAX);
            let mut spikes = vec![0.0; minutes];
            for _ in 0..n_spikes {
                let start = rng.random_range(0..minutes);
                let dur = rng.random_range(SPIKE_DURATION_MIN.0..=SPIKE_DURATION_MIN.1) as usize;
                let amp = rng.random_range(SPIKE_AMP_KW.0..SPIKE_AMP_KW.1);
                for s in spikes.iter_mut().skip(start).take(dur) {
                    *s += amp;
                }
            }
            for m in 0..minutes {
                load_p[(m, i)] +=
                    base * diurnal_shape(m) * (1.0 + wiggle[m]).max(LOAD_NOISE_FLOOR) + spikes[m];
            }
        }
    }
    // Ceilings: reactive follows active through the fixed power factor, so
    // one scale per minute keeps both within their caps.
    let p_cap = MAX_TOTAL_LOAD_P_KW.min(MAX_TOTAL_LOAD_Q_KVAR / tan_phi);
    for m in 0..minutes {
        let total: f64 = load_p.row(m).sum();
        if total > p_cap {
            let s = p_cap / total;
            for i in 0..n_load {
                load_p[(m, i)] *= s;
            }
        }
    }
    let load_q = load_p.mapv(|p| p * tan_phi);

    let mut sky = derive_rng(seed, day as u64, "sky");
    let n_events = sky.random_range(0..=CLOUD_EVENTS_MAX) as usize;
    let events: Vec<(f64, f64, f64)> = (0..n_events)
        .map(|_| {
            (
                sky.random_range(0.0..SOLAR_DAY_MIN),
                sky.random_range(CLOUD_SIGMA_MIN.0..CLOUD_SIGMA_MIN.1),
                sky.random_range(CLOUD_DEPTH.0..CLOUD_DEPTH.1),
            )
        })
        .collect();
    let shared_atten: Vec<f64> = (0..minutes)
        .map(|m| {
            let t = m as f64 + SOLAR_INSET_MIN;
            let dip: f64 = events
                .iter()
                .map(|&(c, s, d)| d * (-((t - c) / s).powi(2)).exp())
                .sum();
            (1.0 - dip).max(CLOUD_ATTEN_FLOOR)
        })
        .collect();
    let mut avail = Array2::<f64>::zeros((minutes, placements.len()));
    for (k, pl) in placements.iter().enumerate() {
        let jitter = ar1_path(minutes, PLANT_JITTER_RHO, PLANT_JITTER_STD, &mut sky);
        for m in 0..minutes {
            let a = (shared_atten[m] + jitter[m]).clamp(PLANT_ATTEN_RANGE.0, PLANT_ATTEN_RANGE.1);
            avail[(m, k)] = pl.p_rated_kw * clear_sky_bell(m) * a;
        }
    }

    DayProfiles {
        day,
        load_p_kw: load_p,
        load_q_kvar: load_q,
        avail_kw: avail,
    }
}

/// Persist day profiles as one wide CSV
/// (`day,minute,p_<bus>...,q_<bus>...,avail_<bus>...`).
pub fn write_profiles(
    days: &[DayProfiles],
    model: &NetworkModel,
    placements: &[PvPlacement],
    path: &Path,
) -> Result<(), TelemetryError> {
    let io_err = |source| TelemetryError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["day".to_string(), "minute".to_string()];
    for b in model.load_buses() {
        header.push(format!("p_{b}"));
    }
    for b in model.load_buses() {
        header.push(format!("q_{b}"));
    }
    for pl in placements {
        header.push(format!("avail_{}", pl.bus));
    }
    let csv_err = |source| TelemetryError::Csv {
        path: path.display().to_string(),
        source,
    };
    w.write_record(&header).map_err(csv_err)?;
    for d in days {
        for m in 0..d.load_p_kw.nrows() {
            let mut rec = vec![d.day.to_string(), m.to_string()];
            rec.extend(d.load_p_kw.row(m).iter().map(|v| v.to_string()));
            rec.extend(d.load_q_kvar.row(m).iter().map(|v| v.to_string()));
            rec.extend(d.avail_kw.row(m).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Load day profiles written by [`write_profiles`] (or an external tool
/// matching its layout).
pub fn read_profiles(
    path: &Path,
    model: &NetworkModel,
    placements: &[PvPlacement],
) -> Result<Vec<DayProfiles>, TelemetryError> {
    let label = path.display().to_string();
    let file = File::open(path).map_err(|source| TelemetryError::Io {
        path: label.clone(),
        source,
    })?;
    let mut r = csv::Reader::from_reader(file);
    let n_load = model.load_buses().len();
    let n_pv = placements.len();
    let expect = 2 + 2 * n_load + n_pv;
    let bad = |msg: String| TelemetryError::BadFile {
        path: label.clone(),
        msg,
    };
    // rows[day] -> (minute -> row values)
    let mut by_day: Vec<(u32, Vec<Vec<f64>>)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|source| TelemetryError::Csv {
            path: label.clone(),
            source,
        })?;
        if rec.len() != expect {
            return Err(bad(format!("expected {expect} columns, found {}", rec.len())));
        }
        let mut vals = Vec::with_capacity(expect);
        for f in rec.iter() {
            vals.push(f.parse::<f64>().map_err(|e| bad(format!("bad number {f:?}: {e}")))?);
        }
        let day = vals[0] as u32;
        match by_day.last_mut() {
            Some((d, rows)) if *d == day => rows.push(vals),
            _ => by_day.push((day, vec![vals])),
        }
    }
    let mut out = Vec::with_capacity(by_day.len());
    for (day, rows) in by_day {
        let minutes = rows.len();
        let mut p = Array2::<f64>::zeros((minutes, n_load));
        let mut q = Array2::<f64>::zeros((minutes, n_load));
        let mut a = Array2::<f64>::zeros((minutes, n_pv));
        for (m, row) in rows.iter().enumerate() {
            if row[1] as usize != m {
                return Err(bad(format!("day {day}: minute {m} out of order")));
            }
            for i in 0..n_load {
                p[(m, i)] = row[2 + i];
                q[(m, i)] = row[2 + n_load + i];
            }
            for k in 0..n_pv {
                a[(m, k)] = row[2 + 2 * n_load + k];
            }
        }
        out.push(DayProfiles {
            day,
            load_p_kw: p,
            load_q_kvar: q,
            avail_kw: a,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn setup() -> (NetworkModel, Vec<PvPlacement>, CustomerMix) {
        let (model, placements) = NetworkModel::default_case();
        let mix = sample_customer_mix(&model, 9);
        (model, placements, mix)
    }

    #[test]
    fn mix_covers_every_load_bus_and_hits_the_peak_total() {
        let (model, _, mix) = setup();
        assert_eq!(mix.customer_base_kw.len(), model.load_buses().len());
        let total: f64 = (0..mix.customer_base_kw.len()).map(|i| mix.bus_base_kw(i)).sum();
        assert!((total - PEAK_TOTAL_LOAD_KW).abs() < 1e-6, "total {total}");
        for c in &mix.customer_base_kw {
            assert!((HOUSEHOLDS_RANGE.0 as usize..=HOUSEHOLDS_RANGE.1 as usize).contains(&c.len()));
            assert!(c.iter().all(|&b| b > 0.0));
        }
    }

    #[test]
    fn bus_shares_stay_household_scale() {
        let (_, _, mix) = setup();
        let bases: Vec<f64> = (0..mix.customer_base_kw.len()).map(|i| mix.bus_base_kw(i)).collect();
        let max = bases.iter().cloned().fold(f64::MIN, f64::max);
        let min = bases.iter().cloned().fold(f64::MAX, f64::min);
        // Widest legal spread: 10 max-weight households vs 4 min-weight.
        assert!(max / min <= 7.5 + 1e-9, "spread {}", max / min);
        assert!(min > 0.0);
    }

    #[test]
    fn day_profiles_respect_shapes_and_caps() {
        let (model, placements, mix) = setup();
        let d = synth_day(&model, &placements, &mix, 9, 0);
        assert_eq!(d.load_p_kw.dim(), (MINUTES_PER_DAY, model.load_buses().len()));
        assert_eq!(d.avail_kw.dim(), (MINUTES_PER_DAY, placements.len()));
        let tan_phi = load_tan_phi();
        for m in 0..MINUTES_PER_DAY {
            let p: f64 = d.load_p_kw.row(m).sum();
            let q: f64 = d.load_q_kvar.row(m).sum();
            assert!(p > 0.0 && p <= MAX_TOTAL_LOAD_P_KW + 1e-9);
            assert!(q > 0.0 && q <= MAX_TOTAL_LOAD_Q_KVAR + 1e-9);
            for i in 0..d.load_p_kw.ncols() {
                assert_eq!(d.load_q_kvar[(m, i)], d.load_p_kw[(m, i)] * tan_phi);
            }
            for (k, pl) in placements.iter().enumerate() {
                let a = d.avail_kw[(m, k)];
                assert!(a >= 0.0 && a <= pl.p_rated_kw * PLANT_ATTEN_RANGE.1 + 1e-9);
            }
        }
    }

    #[test]
    fn window_edges_still_have_sun() {
        let (model, placements, mix) = setup();
        let d = synth_day(&model, &placements, &mix, 9, 3);
        for (k, pl) in placements.iter().enumerate() {
            assert!(d.avail_kw[(0, k)] > 0.03 * pl.p_rated_kw);
            assert!(d.avail_kw[(MINUTES_PER_DAY - 1, k)] > 0.03 * pl.p_rated_kw);
        }
        // And midday clearly beats the edges.
        let mid: f64 = d.avail_kw.row(MINUTES_PER_DAY / 2).sum();
        assert!(mid > 2.0 * d.avail_kw.row(0).sum());
    }

    #[test]
    fn profiles_are_smooth_minute_to_minute() {
        let (model, placements, mix) = setup();
        let d = synth_day(&model, &placements, &mix, 9, 1);
        let totals: Vec<f64> = (0..MINUTES_PER_DAY).map(|m| d.load_p_kw.row(m).sum()).collect();
        let mean = totals.iter().sum::<f64>() / totals.len() as f64;
        let mean_step = totals
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .sum::<f64>()
            / (totals.len() - 1) as f64;
        assert!(mean_step < 0.01 * mean, "step {mean_step} vs mean {mean}");
        let sun: Vec<f64> = (0..MINUTES_PER_DAY).map(|m| d.avail_kw.row(m).sum()).collect();
        let sun_step = sun.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
            / (sun.len() - 1) as f64;
        let sun_peak = sun.iter().cloned().fold(0.0, f64::max);
        assert!(sun_step < 0.02 * sun_peak, "step {sun_step} vs peak {sun_peak}");
    }

    #[test]
    fn synthesis_is_deterministic_and_day_dependent() {
        let (model, placements, mix) = setup();
        let a = synth_day(&model, &placements, &mix, 9, 2);
        let b = synth_day(&model, &placements, &mix, 9, 2);
        assert_eq!(a, b);
        let c = synth_day(&model, &placements, &mix, 9, 4);
        assert_ne!(a.load_p_kw, c.load_p_kw);
        assert_ne!(a.avail_kw, c.avail_kw);
        let mix2 = sample_customer_mix(&model, 10);
        let d = synth_day(&model, &placements, &mix2, 10, 2);
        assert_ne!(a.load_p_kw, d.load_p_kw);
    }

    #[test]
    fn profile_files_round_trip() {
        let (model, placements, mix) = setup();
        let days: Vec<DayProfiles> = (0..2)
            .map(|d| synth_day(&model, &placements, &mix, 9, d))
            .collect();
        let dir = tempdir().unwrap();
        let path = dir.path().join("profiles.csv");
        write_profiles(&days, &model, &placements, &path).unwrap();
        let back = read_profiles(&path, &model, &placements).unwrap();
        assert_eq!(days, back);
    }
}
