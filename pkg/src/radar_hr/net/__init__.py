from radar_hr.net.model import (
    HrEstimate,
    ManifestError,
    ModelManifest,
    PseudoSpectrum,
    PulseNet,
    bin_to_bpm,
    bpm_to_bin,
    fft_bank,
    infer,
    pick_hr,
    prepare_input,
)

__all__ = [
    "HrEstimate",
    "ManifestError",
    "ModelManifest",
    "PseudoSpectrum",
    "PulseNet",
    "bin_to_bpm",
    "bpm_to_bin",
    "fft_bank",
    "infer",
    "pick_hr",
    "prepare_input",
]
