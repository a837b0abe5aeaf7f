#pragma once

#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/numerics.hpp"

namespace msm {

// Continuous multichannel recording, one row per channel.
struct Recording {
    Mat samples; // [channels x n_samples]
    double sample_rate_hz = 0.0;
    std::vector<std::string> labels;

    std::size_t n_channels() const { return samples.rows(); }
    std::size_t n_samples() const { return samples.cols(); }
};

// Normalized biquad (a0 = 1).
struct BiquadCoeffs {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;

    bool stable() const; // poles strictly inside the unit circle
    double magnitude_at(double freq_hz, double sample_rate_hz) const;
};

BiquadCoeffs design_notch(double f0_hz, double q, double sample_rate_hz);
// one section of an even-order Butterworth low-pass (RBJ cookbook)
BiquadCoeffs design_lowpass(double cutoff_hz, double q, double sample_rate_hz);

// forward-backward (zero-phase) pass of a biquad cascade; each pass is
// initialized to the step-response steady state of its first sample
void filtfilt_inplace(const std::vector<BiquadCoeffs>& cascade, std::span<double> x);

struct SignalConfig {
    double notch_hz = 50.0;
    double notch_q = 35.0;
    double target_hz = 200.0;
    double epoch_seconds = 2.0;
    double antialias_rel_cutoff = 0.8; // of the target Nyquist
};

Recording notch_filter(const Recording& rec, double f0_hz, double q);
Recording decimate(const Recording& rec, double target_hz, double antialias_rel_cutoff = 0.8);
// per-channel zero mean / unit population std; constant channels become
// zeros and are reported through warnings when provided
Recording standardize(const Recording& rec, std::vector<std::string>* warnings = nullptr);
SequenceBatch epoch(const Recording& rec, double seconds);

struct PipelineResult {
    SequenceBatch batch;
    std::string manifest_json;
    std::vector<std::string> warnings;
};

// notch -> decimate -> standardize -> epoch, with a manifest of everything
// that was applied
PipelineResult run_pipeline(const Recording& rec, const SignalConfig& config);

// header row = channel labels, one row per sample
Recording load_recording_csv(const std::string& path, double sample_rate_hz);
// raw little-endian f64 frames (sample-major, channels interleaved) described
// by a JSON sidecar {"sample_rate_hz": ..., "channels": ..., "labels": [...]}
Recording load_recording_raw(const std::string& data_path, const std::string& sidecar_path);

} // namespace msm
