#include "core/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace msm {

namespace {
constexpr char kMagic[8] = {'M', 'S', 'M', 'S', 'E', 'Q', '1', '\0'};
constexpr std::uint32_t kDtypeF64 = 1;

template <typename T>
void write_le(std::ofstream& out, T value) {
    unsigned char buf[sizeof(T)];
    for (std::size_t b = 0; b < sizeof(T); ++b)
        buf[b] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * b)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
        v |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    return static_cast<T>(v);
}
} // namespace

void save_batch(const SequenceBatch& batch, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(batch.n_sequences));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(batch.length));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(batch.dim));
    write_le<std::uint32_t>(out, kDtypeF64);
    write_le<std::uint64_t>(out, batch.seed);
    for (double v : batch.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        write_le<std::uint64_t>(out, bits);
    }
    if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

SequenceBatch load_batch(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open for reading: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw Error(ErrorCode::Parse, "not an MSMSEQ1 container: " + path);
    SequenceBatch b;
    b.n_sequences = read_le<std::uint32_t>(in);
    b.length = read_le<std::uint32_t>(in);
    b.dim = read_le<std::uint32_t>(in);
    std::uint32_t dtype = read_le<std::uint32_t>(in);
    b.seed = read_le<std::uint64_t>(in);
    if (!in) throw Error(ErrorCode::Corrupt, "truncated MSMSEQ1 header: " + path);
    if (dtype != kDtypeF64)
        throw Error(ErrorCode::Version, "unsupported MSMSEQ1 dtype code " + std::to_string(dtype));
    const std::size_t count = b.n_sequences * b.length * b.dim;
    std::vector<unsigned char> raw(count * 8);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw Error(ErrorCode::Corrupt, "truncated MSMSEQ1 payload: " + path);
    b.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (std::size_t k = 0; k < 8; ++k)
            bits |= static_cast<std::uint64_t>(raw[i * 8 + k]) << (8 * k);
        std::memcpy(&b.data[i], &bits, 8);
    }
    return b;
}

void export_batch_csv(const SequenceBatch& batch, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw Error(ErrorCode::Io, "cannot open for writing: " + path);
    std::fprintf(f, "seq,t");
    for (std::size_t j = 0; j < batch.dim; ++j) std::fprintf(f, ",x%zu", j);
    std::fprintf(f, "\n");
    for (std::size_t n = 0; n < batch.n_sequences; ++n) {
        const double* seq = batch.data.data() + n * batch.length * batch.dim;
        for (std::size_t t = 0; t < batch.length; ++t) {
            std::fprintf(f, "%zu,%zu", n, t);
            for (std::size_t j = 0; j < batch.dim; ++j)
                std::fprintf(f, ",%.17g", seq[t * batch.dim + j]);
            std::fprintf(f, "\n");
        }
    }
    std::fclose(f);
}

} // namespace msm
