#![no_main]

use libfuzzer_sys::fuzz_target;
use vidscript::mask::{select_targets, AttentionProfile, MaskConfig};
use vidscript::seed::seeded_rng;

fuzz_target!(|data: &[u8]| {
    let Ok(profile) = serde_json::from_slice::<AttentionProfile>(data) else { return };
    let n = profile.weights.len();
    if n > 4096 {
        return;
    }
    if let Ok(plan) = select_targets(n, &profile, &MaskConfig::default(), &mut seeded_rng(0)) {
        assert!(plan.targets().all(|t| t < n && !profile.is_special(t)));
    }
});
