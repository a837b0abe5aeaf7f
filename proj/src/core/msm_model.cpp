#include "core/msm_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace msm {

using nlohmann::json;

namespace {

constexpr int kModelFormatVersion = 1;

// Parameter payloads are hex-encoded little-endian f64 so that a save/load
// round trip is bitwise exact and the file stays diffable.
std::string encode_f64(std::span<const double> values) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(values.size() * 16);
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int b = 0; b < 8; ++b) {
            unsigned byte = (bits >> (8 * b)) & 0xffu;
            out.push_back(digits[byte >> 4]);
            out.push_back(digits[byte & 0xf]);
        }
    }
    return out;
}

Vec decode_f64(const std::string& hex, std::size_t expected, const std::string& field) {
    if (hex.size() % 16 != 0)
        throw Error(ErrorCode::Corrupt, "field '" + field + "': odd hex payload length");
    std::size_t n = hex.size() / 16;
    if (n != expected)
        throw Error(ErrorCode::Shape, "field '" + field + "': expected " +
                                          std::to_string(expected) + " values, found " +
                                          std::to_string(n));
    auto nibble = [&](char c) -> std::uint64_t {
        if (c >= '0' && c <= '9') return static_cast<std::uint64_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<std::uint64_t>(c - 'a' + 10);
        throw Error(ErrorCode::Corrupt, "field '" + field + "': invalid hex digit");
    };
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            std::uint64_t hi = nibble(hex[i * 16 + 2 * b]);
            std::uint64_t lo = nibble(hex[i * 16 + 2 * b + 1]);
            bits |= ((hi << 4) | lo) << (8 * b);
        }
        double v;
        std::memcpy(&v, &bits, 8);
        out[i] = v;
    }
    return out;
}

std::uint64_t fnv1a64(std::uint64_t h, std::span<const double> values) {
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

// Checksum over all parameter blocks in the fixed serialization order.
std::uint64_t model_checksum(const MsmModel& m) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a64(h, m.chain.log_pi);
    h = fnv1a64(h, m.chain.log_A.data());
    for (const Vec& v : m.initial.mean) h = fnv1a64(h, v);
    for (const Vec& v : m.initial.log_var) h = fnv1a64(h, v);
    for (const TransitionNetwork& net : m.networks) {
        h = fnv1a64(h, net.w1().data());
        h = fnv1a64(h, net.b1());
        h = fnv1a64(h, net.w2().data());
        h = fnv1a64(h, net.b2());
        h = fnv1a64(h, net.log_var());
        h = fnv1a64(h, net.mask().data());
    }
    return h;
}

std::string checksum_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

bool rows_equal(const Vec& a, const Vec& b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

} // namespace

MsmModel make_empty_model(const ModelSpec& spec) {
    MsmModel m;
    m.spec = spec;
    const std::size_t K = spec.n_states;
    const std::size_t K0 = spec.initial_states();
    m.chain.log_pi = Vec(K0, -std::log(static_cast<double>(K0)));
    m.chain.log_A = Mat(K, K, -std::log(static_cast<double>(K)));
    m.initial.mean.assign(K0, Vec(spec.window_dim(), 0.0));
    m.initial.log_var.assign(K0, Vec(spec.window_dim(), 0.0));
    m.networks.reserve(K);
    for (std::size_t k = 0; k < K; ++k)
        m.networks.emplace_back(spec.d, spec.lag, spec.hidden_per_output, spec.activation);
    return m;
}

std::vector<std::string> validate(const MsmModel& model) {
    std::vector<std::string> errs;
    const ModelSpec& s = model.spec;
    const std::size_t K = s.n_states;
    const std::size_t K0 = s.initial_states();

    if (s.d < 1) errs.push_back("spec.d must be >= 1");
    if (s.lag < 1) errs.push_back("spec.M must be >= 1");
    if (K < 1) errs.push_back("spec.K must be >= 1");
    if (K0 < 1 || K0 > K) errs.push_back("spec.K0 must lie in [1, K]");
    if (s.hidden_per_output < 1) errs.push_back("spec.hidden_per_output must be >= 1");
    if (!errs.empty()) return errs; // shape checks below assume a sane spec

    const double tol = 1e-9;
    if (model.chain.log_pi.size() != K0) {
        errs.push_back("chain.log_pi has wrong length");
    } else {
        double z = log_sum_exp(model.chain.log_pi);
        if (!(std::fabs(z) <= tol)) errs.push_back("chain.log_pi is not normalized");
    }
    if (model.chain.log_A.rows() != K || model.chain.log_A.cols() != K) {
        errs.push_back("chain.log_A has wrong shape");
    } else {
        for (std::size_t k = 0; k < K; ++k) {
            double z = log_sum_exp(std::span<const double>(model.chain.log_A.row(k), K));
            if (!(std::fabs(z) <= tol))
                errs.push_back("chain.log_A row " + std::to_string(k) + " is not normalized");
        }
    }

    if (model.initial.mean.size() != K0 || model.initial.log_var.size() != K0) {
        errs.push_back("initial emission has wrong component count");
    } else {
        for (std::size_t k = 0; k < K0; ++k) {
            if (model.initial.mean[k].size() != s.window_dim() ||
                model.initial.log_var[k].size() != s.window_dim()) {
                errs.push_back("initial component " + std::to_string(k) + " has wrong length");
                continue;
            }
            if (!all_finite(model.initial.mean[k]) || !all_finite(model.initial.log_var[k]))
                errs.push_back("initial component " + std::to_string(k) + " has non-finite entries");
        }
        for (std::size_t a = 0; a < K0; ++a)
            for (std::size_t b = a + 1; b < K0; ++b)
                if (model.initial.mean[a].size() == model.initial.mean[b].size() &&
                    rows_equal(model.initial.mean[a], model.initial.mean[b]) &&
                    rows_equal(model.initial.log_var[a], model.initial.log_var[b]))
                    errs.push_back("initial components " + std::to_string(a) + " and " +
                                   std::to_string(b) + " are identical (unique indexing)");
    }

    if (model.networks.size() != K) {
        errs.push_back("wrong number of transition networks");
        return errs;
    }
    for (std::size_t k = 0; k < K; ++k) {
        const TransitionNetwork& net = model.networks[k];
        std::string tag = "network " + std::to_string(k);
        if (net.out_dim() != s.d || net.lag() != s.lag ||
            net.hidden_per_output() != s.hidden_per_output) {
            errs.push_back(tag + " shape inconsistent with spec");
            continue;
        }
        if (!all_finite(net.w1().data()) || !all_finite(net.b1()) ||
            !all_finite(net.w2().data()) || !all_finite(net.b2()) ||
            !all_finite(net.log_var()))
            errs.push_back(tag + " has non-finite parameters");
        if (!net.mask_respected()) errs.push_back(tag + " has nonzero masked weights");
    }
    return errs;
}

std::string model_to_json(const MsmModel& m) {
    json j;
    j["format"] = "msm-model";
    j["version"] = kModelFormatVersion;
    j["spec"] = {{"d", m.spec.d},
                 {"M", m.spec.lag},
                 {"K", m.spec.n_states},
                 {"K0", m.spec.initial_states()},
                 {"hidden_per_output", m.spec.hidden_per_output},
                 {"activation", activation_name(m.spec.activation)},
                 {"locally_connected", m.spec.locally_connected}};
    j["seed"] = m.seed;
    j["checksum"] = checksum_hex(model_checksum(m));
    json params;
    params["log_pi"] = encode_f64(m.chain.log_pi);
    params["log_A"] = encode_f64(m.chain.log_A.data());
    json initial = json::array();
    for (std::size_t k = 0; k < m.initial.mean.size(); ++k)
        initial.push_back({{"mean", encode_f64(m.initial.mean[k])},
                           {"log_var", encode_f64(m.initial.log_var[k])}});
    params["initial"] = std::move(initial);
    json nets = json::array();
    for (const TransitionNetwork& net : m.networks)
        nets.push_back({{"w1", encode_f64(net.w1().data())},
                        {"b1", encode_f64(net.b1())},
                        {"w2", encode_f64(net.w2().data())},
                        {"b2", encode_f64(net.b2())},
                        {"log_var", encode_f64(net.log_var())},
                        {"mask", encode_f64(net.mask().data())}});
    params["networks"] = std::move(nets);
    j["params"] = std::move(params);
    return j.dump(2);
}

MsmModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (j.value("format", "") != "msm-model")
            throw Error(ErrorCode::Parse, "not an msm-model document");
        if (j.at("version").get<int>() != kModelFormatVersion)
            throw Error(ErrorCode::Version,
                        "unsupported model format version " + j.at("version").dump());

        const json& sj = j.at("spec");
        ModelSpec spec;
        spec.d = sj.at("d").get<std::size_t>();
        spec.lag = sj.at("M").get<std::size_t>();
        spec.n_states = sj.at("K").get<std::size_t>();
        spec.n_initial = sj.at("K0").get<std::size_t>();
        spec.hidden_per_output = sj.at("hidden_per_output").get<std::size_t>();
        spec.activation = activation_from_name(sj.at("activation").get<std::string>());
        spec.locally_connected = sj.at("locally_connected").get<bool>();
        if (spec.d < 1 || spec.lag < 1 || spec.n_states < 1)
            throw Error(ErrorCode::Shape, "spec dimensions must be positive");

        MsmModel m = make_empty_model(spec);
        m.seed = j.value("seed", std::uint64_t{0});

        const std::size_t K = spec.n_states;
        const std::size_t K0 = spec.initial_states();
        const json& p = j.at("params");
        m.chain.log_pi = decode_f64(p.at("log_pi").get<std::string>(), K0, "log_pi");
        Vec a = decode_f64(p.at("log_A").get<std::string>(), K * K, "log_A");
        m.chain.log_A = Mat(K, K);
        m.chain.log_A.data() = std::move(a);

        const json& initial = p.at("initial");
        if (initial.size() != K0)
            throw Error(ErrorCode::Shape, "field 'initial': expected " + std::to_string(K0) +
                                              " components, found " +
                                              std::to_string(initial.size()));
        for (std::size_t k = 0; k < K0; ++k) {
            m.initial.mean[k] = decode_f64(initial[k].at("mean").get<std::string>(),
                                           spec.window_dim(), "initial.mean");
            m.initial.log_var[k] = decode_f64(initial[k].at("log_var").get<std::string>(),
                                              spec.window_dim(), "initial.log_var");
        }

        const json& nets = p.at("networks");
        if (nets.size() != K)
            throw Error(ErrorCode::Shape, "field 'networks': expected " + std::to_string(K) +
                                              " entries, found " + std::to_string(nets.size()));
        for (std::size_t k = 0; k < K; ++k) {
            TransitionNetwork& net = m.networks[k];
            const json& nj = nets[k];
            net.w1().data() = decode_f64(nj.at("w1").get<std::string>(),
                                         net.hidden_dim() * net.in_dim(), "networks.w1");
            net.b1() = decode_f64(nj.at("b1").get<std::string>(), net.hidden_dim(),
                                  "networks.b1");
            net.w2().data() = decode_f64(nj.at("w2").get<std::string>(),
                                         net.out_dim() * net.hidden_per_output(),
                                         "networks.w2");
            net.b2() = decode_f64(nj.at("b2").get<std::string>(), net.out_dim(),
                                  "networks.b2");
            net.log_var() = decode_f64(nj.at("log_var").get<std::string>(), net.out_dim(),
                                       "networks.log_var");
            Vec mask = decode_f64(nj.at("mask").get<std::string>(),
                                  net.out_dim() * net.in_dim(), "networks.mask");
            Mat maskm(net.out_dim(), net.in_dim());
            maskm.data() = std::move(mask);
            net.set_mask(maskm);
        }

        std::string stored = j.at("checksum").get<std::string>();
        std::string actual = checksum_hex(model_checksum(m));
        if (stored != actual)
            throw Error(ErrorCode::Corrupt, "model checksum mismatch (stored " + stored +
                                                ", computed " + actual + ")");
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("malformed model document: ") + e.what());
    }
}

void save_model(const MsmModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path);
    out << model_to_json(model) << "\n";
    if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

MsmModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open for reading: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

} // namespace msm
