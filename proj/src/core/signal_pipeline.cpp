#include "core/signal_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace msm {

using nlohmann::json;

bool BiquadCoeffs::stable() const {
    // |a2| < 1 and |a1| < 1 + a2 (Jury criterion for a real quadratic)
    return std::fabs(a2) < 1.0 && std::fabs(a1) < 1.0 + a2;
}

double BiquadCoeffs::magnitude_at(double freq_hz, double sample_rate_hz) const {
    const double w = 2.0 * M_PI * freq_hz / sample_rate_hz;
    const std::complex<double> z = std::polar(1.0, -w);
    std::complex<double> num = b0 + b1 * z + b2 * z * z;
    std::complex<double> den = 1.0 + a1 * z + a2 * z * z;
    return std::abs(num / den);
}

BiquadCoeffs design_notch(double f0_hz, double q, double sample_rate_hz) {
    require(f0_hz > 0.0 && f0_hz < sample_rate_hz / 2.0,
            "design_notch: center frequency must lie below Nyquist");
    require(q > 0.0, "design_notch: Q must be positive");
    const double w0 = 2.0 * M_PI * f0_hz / sample_rate_hz;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    BiquadCoeffs c;
    c.b0 = 1.0 / a0;
    c.b1 = -2.0 * cw / a0;
    c.b2 = 1.0 / a0;
    c.a1 = -2.0 * cw / a0;
    c.a2 = (1.0 - alpha) / a0;
    return c;
}

BiquadCoeffs design_lowpass(double cutoff_hz, double q, double sample_rate_hz) {
    require(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0,
            "design_lowpass: cutoff must lie below Nyquist");
    const double w0 = 2.0 * M_PI * cutoff_hz / sample_rate_hz;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    BiquadCoeffs c;
    c.b0 = (1.0 - cw) / 2.0 / a0;
    c.b1 = (1.0 - cw) / a0;
    c.b2 = (1.0 - cw) / 2.0 / a0;
    c.a1 = -2.0 * cw / a0;
    c.a2 = (1.0 - alpha) / a0;
    return c;
}

namespace {

// direct-form-II-transposed single pass; state initialized so a constant
// input equal to x[0] would pass through at the DC gain with no transient
void biquad_pass(const BiquadCoeffs& c, std::span<double> x) {
    if (x.empty()) return;
    // steady state for unit input: y = H(1), internal states solved from the
    // DF2T update equations with x = 1, y = H(1)
    const double h1 = (c.b0 + c.b1 + c.b2) / (1.0 + c.a1 + c.a2);
    double z1 = (c.b1 + c.b2) - (c.a1 + c.a2) * h1;
    double z2 = c.b2 - c.a2 * h1;
    z1 *= x[0];
    z2 *= x[0];
    for (double& v : x) {
        const double in = v;
        const double out = c.b0 * in + z1;
        z1 = c.b1 * in - c.a1 * out + z2;
        z2 = c.b2 * in - c.a2 * out;
        v = out;
    }
}

} // namespace

void filtfilt_inplace(const std::vector<BiquadCoeffs>& cascade, std::span<double> x) {
    for (const BiquadCoeffs& c : cascade) {
        require(c.stable(), "filtfilt: unstable section");
        biquad_pass(c, x);
        std::reverse(x.begin(), x.end());
        biquad_pass(c, x);
        std::reverse(x.begin(), x.end());
    }
}

Recording notch_filter(const Recording& rec, double f0_hz, double q) {
    BiquadCoeffs c = design_notch(f0_hz, q, rec.sample_rate_hz);
    Recording out = rec;
    for (std::size_t ch = 0; ch < out.n_channels(); ++ch)
        filtfilt_inplace({c}, std::span<double>(out.samples.row(ch), out.n_samples()));
    return out;
}

Recording decimate(const Recording& rec, double target_hz, double antialias_rel_cutoff) {
    require(target_hz > 0.0, "decimate: target rate must be positive");
    const double ratio = rec.sample_rate_hz / target_hz;
    const auto factor = static_cast<std::size_t>(std::llround(ratio));
    require(factor >= 1 && std::fabs(ratio - static_cast<double>(factor)) < 1e-9,
            "decimate: sample rate must be an integer multiple of the target");

    Recording filtered = rec;
    if (factor > 1) {
        // 4th-order Butterworth as two RBJ sections, zero-phase
        const double cutoff = antialias_rel_cutoff * target_hz / 2.0;
        const std::vector<BiquadCoeffs> cascade = {
            design_lowpass(cutoff, 1.0 / (2.0 * std::cos(M_PI / 8.0)), rec.sample_rate_hz),
            design_lowpass(cutoff, 1.0 / (2.0 * std::cos(3.0 * M_PI / 8.0)),
                           rec.sample_rate_hz)};
        for (std::size_t ch = 0; ch < filtered.n_channels(); ++ch)
            filtfilt_inplace(cascade,
                             std::span<double>(filtered.samples.row(ch), filtered.n_samples()));
    }

    const std::size_t n_out = (filtered.n_samples() + factor - 1) / factor;
    Recording out;
    out.sample_rate_hz = target_hz;
    out.labels = rec.labels;
    out.samples = Mat(rec.n_channels(), n_out);
    for (std::size_t ch = 0; ch < rec.n_channels(); ++ch)
        for (std::size_t i = 0; i < n_out; ++i)
            out.samples(ch, i) = filtered.samples(ch, i * factor);
    return out;
}

Recording standardize(const Recording& rec, std::vector<std::string>* warnings) {
    Recording out = rec;
    const std::size_t n = rec.n_samples();
    require(n > 0, "standardize: empty recording");
    for (std::size_t ch = 0; ch < rec.n_channels(); ++ch) {
        double* row = out.samples.row(ch);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += row[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double r = row[i] - mean;
            var += r * r;
        }
        var /= static_cast<double>(n);
        if (var <= 0.0) {
            std::fill(row, row + n, 0.0);
            if (warnings)
                warnings->push_back("channel " + std::to_string(ch) +
                                    " has zero variance; standardized to zeros");
            continue;
        }
        const double inv_std = 1.0 / std::sqrt(var);
        for (std::size_t i = 0; i < n; ++i) row[i] = (row[i] - mean) * inv_std;
    }
    return out;
}

SequenceBatch epoch(const Recording& rec, double seconds) {
    require(seconds > 0.0, "epoch: duration must be positive");
    const auto samples_per_epoch =
        static_cast<std::size_t>(std::llround(seconds * rec.sample_rate_hz));
    require(samples_per_epoch >= 1, "epoch: epoch shorter than one sample");
    const std::size_t n_epochs = rec.n_samples() / samples_per_epoch;
    require(n_epochs >= 1, "epoch: recording shorter than one epoch");

    SequenceBatch batch = SequenceBatch::empty(n_epochs, samples_per_epoch, rec.n_channels());
    for (std::size_t e = 0; e < n_epochs; ++e) {
        double* seq = batch.sequence_data(e);
        for (std::size_t t = 0; t < samples_per_epoch; ++t)
            for (std::size_t ch = 0; ch < rec.n_channels(); ++ch)
                seq[t * rec.n_channels() + ch] = rec.samples(ch, e * samples_per_epoch + t);
    }
    return batch;
}

PipelineResult run_pipeline(const Recording& rec, const SignalConfig& config) {
    PipelineResult result;
    Recording notched = notch_filter(rec, config.notch_hz, config.notch_q);
    Recording low = decimate(notched, config.target_hz, config.antialias_rel_cutoff);
    Recording std_rec = standardize(low, &result.warnings);
    result.batch = epoch(std_rec, config.epoch_seconds);

    json manifest;
    manifest["pipeline"] = {"notch", "decimate", "standardize", "epoch"};
    manifest["input"] = {{"sample_rate_hz", rec.sample_rate_hz},
                         {"channels", rec.n_channels()},
                         {"samples", rec.n_samples()}};
    manifest["notch"] = {{"f0_hz", config.notch_hz},
                         {"q", config.notch_q},
                         {"zero_phase", true}};
    manifest["decimate"] = {{"target_hz", config.target_hz},
                            {"antialias", "butterworth4"},
                            {"antialias_rel_cutoff", config.antialias_rel_cutoff},
                            {"zero_phase", true}};
    manifest["standardize"] = {{"per_channel", true}, {"population_std", true}};
    manifest["epoch"] = {{"seconds", config.epoch_seconds},
                         {"epochs", result.batch.n_sequences},
                         {"samples_per_epoch", result.batch.length}};
    manifest["warnings"] = result.warnings;
    result.manifest_json = manifest.dump(2);
    return result;
}

Recording load_recording_csv(const std::string& path, double sample_rate_hz) {
    require(sample_rate_hz > 0.0, "load_recording_csv: sample rate must be positive");
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::Parse, "empty CSV: " + path);

    Recording rec;
    rec.sample_rate_hz = sample_rate_hz;
    {
        std::stringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) rec.labels.push_back(cell);
    }
    if (rec.labels.empty()) throw Error(ErrorCode::Parse, "CSV header has no channels");

    std::vector<Vec> columns(rec.labels.size());
    std::size_t row_count = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col >= columns.size())
                throw Error(ErrorCode::Parse, "CSV row has too many columns");
            try {
                columns[col].push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw Error(ErrorCode::Parse, "CSV cell is not a number: " + cell);
            }
            ++col;
        }
        if (col != columns.size()) throw Error(ErrorCode::Parse, "CSV row has too few columns");
        ++row_count;
    }
    require(row_count > 0, "load_recording_csv: no samples", ErrorCode::Parse);
    rec.samples = Mat(columns.size(), row_count);
    for (std::size_t ch = 0; ch < columns.size(); ++ch)
        std::copy(columns[ch].begin(), columns[ch].end(), rec.samples.row(ch));
    return rec;
}

Recording load_recording_raw(const std::string& data_path, const std::string& sidecar_path) {
    std::ifstream meta_in(sidecar_path);
    if (!meta_in) throw Error(ErrorCode::Io, "cannot open for reading: " + sidecar_path);
    json meta;
    try {
        meta_in >> meta;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("bad recording sidecar: ") + e.what());
    }
    Recording rec;
    try {
        rec.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
        std::size_t channels = meta.at("channels").get<std::size_t>();
        if (meta.contains("labels"))
            rec.labels = meta.at("labels").get<std::vector<std::string>>();
        else
            for (std::size_t ch = 0; ch < channels; ++ch)
                rec.labels.push_back("ch" + std::to_string(ch));
        if (rec.labels.size() != channels)
            throw Error(ErrorCode::Shape, "sidecar labels do not match channel count");

        std::ifstream in(data_path, std::ios::binary | std::ios::ate);
        if (!in) throw Error(ErrorCode::Io, "cannot open for reading: " + data_path);
        const auto bytes = static_cast<std::size_t>(in.tellg());
        if (bytes % (8 * channels) != 0)
            throw Error(ErrorCode::Corrupt, "raw recording size is not a whole number of frames");
        const std::size_t frames = bytes / (8 * channels);
        require(frames > 0, "raw recording is empty", ErrorCode::Corrupt);
        in.seekg(0);
        std::vector<double> frame(channels);
        rec.samples = Mat(channels, frames);
        for (std::size_t t = 0; t < frames; ++t) {
            in.read(reinterpret_cast<char*>(frame.data()),
                    static_cast<std::streamsize>(8 * channels));
            if (!in) throw Error(ErrorCode::Corrupt, "truncated raw recording");
            for (std::size_t ch = 0; ch < channels; ++ch) rec.samples(ch, t) = frame[ch];
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("bad recording sidecar: ") + e.what());
    }
    require(rec.sample_rate_hz > 0.0, "sidecar sample rate must be positive",
            ErrorCode::Parse);
    return rec;
}

} // namespace msm
