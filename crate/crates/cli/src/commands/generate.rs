use anyhow::Result;
use glucast_core::data::{synth_generate, write_csv, SynthConfig};

use super::{ensure_dir, load, seed, usage, write_file, Loaded};
use crate::Common;

pub fn generate(common: &Common) -> Result<()> {
    let Loaded { kv, .. } = load(common)?;
    let (cfg, seed) = (|| -> Result<_> {
        let d = SynthConfig::default();
        let cfg = SynthConfig {
            patients: kv.get_or("patients", d.patients)?,
            sessions_per_patient: kv.get_or("sessions_per_patient", d.sessions_per_patient)?,
            days_per_session: kv.get_or("days_per_session", d.days_per_session)?,
            noise_sd: kv.get_or("noise_sd", d.noise_sd)?,
            noise_ar: kv.get_or("noise_ar", d.noise_ar)?,
            meals_per_day: kv.get_or("meals_per_day", d.meals_per_day)?,
            snack_probability: kv.get_or("snack_probability", d.snack_probability)?,
            circadian_amplitude: kv.get_or("circadian_amplitude", d.circadian_amplitude)?,
            ..d
        };
        let seed = seed(&kv, common)?;
        kv.finish()?;
        cfg.validate()?;
        Ok((cfg, seed))
    })()
    .map_err(usage)?;

    let series = synth_generate(&cfg, seed)?;
    let mut bytes = Vec::new();
    write_csv(&mut bytes, &series)?;
    ensure_dir(&common.out)?;
    let path = common.out.join("cgm.csv");
    write_file(&path, &bytes)?;

    let rows: usize = series.iter().map(|s| s.len()).sum();
    println!(
        "patients {} sessions {} rows {} -> {}",
        cfg.patients,
        series.len(),
        rows,
        path.display()
    );
    Ok(())
}
