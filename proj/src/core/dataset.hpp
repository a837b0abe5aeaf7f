#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/inference.hpp"
#include "core/numerics.hpp"

namespace msm {

// N real-valued sequences sharing length T and dimension d, stored
// contiguously row-major as [n][t][dim].
struct SequenceBatch {
    std::size_t n_sequences = 0;
    std::size_t length = 0; // T
    std::size_t dim = 0;    // d
    Vec data;
    std::uint64_t seed = 0; // generating seed (0 when not applicable)

    SequenceView sequence(std::size_t n) const {
        return SequenceView(data.data() + n * length * dim, length, dim);
    }
    double* sequence_data(std::size_t n) { return data.data() + n * length * dim; }

    static SequenceBatch empty(std::size_t n, std::size_t t, std::size_t d) {
        SequenceBatch b;
        b.n_sequences = n;
        b.length = t;
        b.dim = d;
        b.data.assign(n * t * d, 0.0);
        return b;
    }
};

// Binary container: magic "MSMSEQ1\0", u32 N, u32 T, u32 d,
// u32 dtype (1 = little-endian f64), u64 seed, then the payload.
void save_batch(const SequenceBatch& batch, const std::string& path);
SequenceBatch load_batch(const std::string& path);

// CSV interop: header "seq,t,x0,..,x{d-1}", one row per (sequence, step).
void export_batch_csv(const SequenceBatch& batch, const std::string& path);

} // namespace msm
