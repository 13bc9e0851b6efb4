//! Patient-disjoint split of a slice list into train/validation/test/challenge.

use ldct::dataset::{allocate_patients, is_patient_disjoint, standard_split_fractions, STANDARD_PARTS};
use ldct::prelude::*;

fn main() -> ldct::Result<()> {
    // 40 patients with 3 to 7 slices each
    let ids: Vec<u64> = (0..40u64).flat_map(|p| std::iter::repeat_n(p, 3 + (p % 5) as usize)).collect();
    let fractions = standard_split_fractions();
    println!("patient allocation for 812 patients: {:?}", allocate_patients(812, &fractions));

    let parts = split_by_patient(&ids, &fractions, 42)?;
    for ((name, _), indices) in STANDARD_PARTS.iter().zip(&parts) {
        let mut patients: Vec<u64> = indices.iter().map(|&i| ids[i]).collect();
        patients.dedup();
        println!("{name:>10}: {:>3} slices, {:>2} patients", indices.len(), patients.len());
    }
    println!("patient-disjoint: {}", is_patient_disjoint(&parts, &ids));
    Ok(())
}
