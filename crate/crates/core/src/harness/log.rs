//! Per-plant-step run log and its CSV form.

use std::io::Write;

use crate::math::{Quat, Vec3};
use crate::mpc::SolveStatus;

pub const CSV_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub q: Quat,
    pub w: Vec3,
    pub p_ref: Vec3,
    pub v_ref: Vec3,
    pub thrust_cmd: f64,
    pub rates_cmd: Vec3,
    pub torque_cmd: Vec3,
    pub f_d: Vec3,
    pub tau_d: Vec3,
    pub f_hat: Vec3,
    pub status: SolveStatus,
    /// NaN when no optimizer ran.
    pub kkt: f64,
}

impl LogRow {
    pub fn position_error(&self) -> Vec3 {
        self.p - self.p_ref
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    /// Disturbance switch-on time, s.
    pub activation: f64,
    /// Set when the run stopped after repeated solver failures.
    pub aborted_at: Option<f64>,
    /// Wall-clock seconds spent in the loop.
    pub wall_time: f64,
}

const COLUMNS: [&str; 38] = [
    "t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "px_ref", "py_ref", "pz_ref", "vx_ref",
    "vy_ref", "vz_ref", "thrust_cmd", "wx_cmd", "wy_cmd", "wz_cmd", "taux_cmd", "tauy_cmd", "tauz_cmd", "fdx", "fdy", "fdz",
    "taudx", "taudy", "taudz", "fhatx", "fhaty", "fhatz", "status", "kkt",
];

impl RunLog {
    pub fn duration(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }

    /// Writes the versioned header and one line per row. Floats use the
    /// shortest round-trip representation, so output is byte-stable.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# fxmpc run log v{CSV_VERSION}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            let nums = [
                r.t, r.p.x, r.p.y, r.p.z, r.v.x, r.v.y, r.v.z, r.q.w, r.q.x, r.q.y, r.q.z, r.w.x, r.w.y, r.w.z, r.p_ref.x, r.p_ref.y,
                r.p_ref.z, r.v_ref.x, r.v_ref.y, r.v_ref.z, r.thrust_cmd, r.rates_cmd.x, r.rates_cmd.y, r.rates_cmd.z, r.torque_cmd.x,
                r.torque_cmd.y, r.torque_cmd.z, r.f_d.x, r.f_d.y, r.f_d.z, r.tau_d.x, r.tau_d.y, r.tau_d.z, r.f_hat.x, r.f_hat.y,
                r.f_hat.z,
            ];
            let fields = nums.iter().map(f64::to_string).chain([r.status.as_str().to_string(), r.kkt.to_string()]);
            w.write_record(fields)?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii output")
    }
}
