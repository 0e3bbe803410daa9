#include "syntrans/checkpoint.hpp"

#include <fstream>

#include "binio.hpp"

namespace syntrans::nn {

using detail::ByteReader;
using detail::put_f32;
using detail::put_u32;

void save_checkpoint(const std::filesystem::path& path, const std::vector<TensorRecord>& tensors) {
    std::string buf;
    buf.append("SYNW");
    put_u32(buf, kCheckpointVersion);
    for (const TensorRecord& t : tensors) {
        std::size_t count = 1;
        for (std::uint32_t d : t.dims) count *= d;
        if (count != t.values.size()) {
            throw Error(Errc::ShapeMismatch, "tensor '" + t.name + "' payload does not match dims");
        }
        put_u32(buf, static_cast<std::uint32_t>(t.name.size()));
        buf.append(t.name);
        put_u32(buf, static_cast<std::uint32_t>(t.dims.size()));
        for (std::uint32_t d : t.dims) put_u32(buf, d);
        for (float f : t.values) put_f32(buf, f);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::MissingArtifact, "cannot open checkpoint for writing: " + path.string());
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw Error(Errc::CorruptPayload, "short write on checkpoint: " + path.string());
    }
}

std::vector<TensorRecord> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::MissingCheckpoint, "checkpoint not found: " + path.string());
    }
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader r(buf.data(), buf.size(), "checkpoint");
    if (r.str(4) != "SYNW") {
        throw Error(Errc::BadMagic, "not a SYNW checkpoint: " + path.string());
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw Error(Errc::VersionUnsupported,
                    "checkpoint version " + std::to_string(version) + " unsupported");
    }
    std::vector<TensorRecord> tensors;
    while (!r.at_end()) {
        TensorRecord rec;
        const std::uint32_t name_len = r.u32();
        rec.name = r.str(name_len);
        const std::uint32_t rank = r.u32();
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            rec.dims.push_back(r.u32());
            count *= rec.dims.back();
        }
        rec.values.resize(count);
        for (std::size_t i = 0; i < count; ++i) rec.values[i] = r.f32();
        tensors.push_back(std::move(rec));
    }
    return tensors;
}

const TensorRecord& find_tensor(const std::vector<TensorRecord>& tensors, std::string_view name) {
    for (const TensorRecord& t : tensors) {
        if (t.name == name) return t;
    }
    throw Error(Errc::MissingCheckpoint, "tensor '" + std::string(name) + "' missing from checkpoint");
}

TensorRecord matrix_record(const std::string& name, const num::Matrix& m) {
    TensorRecord rec;
    rec.name = name;
    rec.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    rec.values.reserve(m.data().size());
    for (double v : m.data()) rec.values.push_back(static_cast<float>(v));
    return rec;
}

TensorRecord vector_record(const std::string& name, const num::Vector& v) {
    TensorRecord rec;
    rec.name = name;
    rec.dims = {static_cast<std::uint32_t>(v.size())};
    rec.values.reserve(v.size());
    for (double x : v) rec.values.push_back(static_cast<float>(x));
    return rec;
}

num::Matrix record_to_matrix(const TensorRecord& rec) {
    if (rec.dims.size() != 2) {
        throw Error(Errc::CorruptPayload, "tensor '" + rec.name + "' is not rank 2");
    }
    std::vector<double> data(rec.values.begin(), rec.values.end());
    return num::Matrix(rec.dims[0], rec.dims[1], std::move(data));
}

num::Vector record_to_vector(const TensorRecord& rec) {
    if (rec.dims.size() != 1) {
        throw Error(Errc::CorruptPayload, "tensor '" + rec.name + "' is not rank 1");
    }
    return num::Vector(rec.values.begin(), rec.values.end());
}

void append_layer_records(std::vector<TensorRecord>& out, const std::string& prefix,
                          const AffineLayer& layer) {
    out.push_back(matrix_record(prefix + ".W", layer.weight()));
    if (layer.has_bias()) {
        out.push_back(vector_record(prefix + ".b", layer.bias()));
    }
}

AffineLayer layer_from_records(const std::vector<TensorRecord>& tensors, const std::string& prefix,
                               bool with_bias) {
    const num::Matrix w = record_to_matrix(find_tensor(tensors, prefix + ".W"));
    AffineLayer layer(w.cols(), w.rows(), with_bias);
    layer.weight() = w;
    if (with_bias) {
        layer.bias() = record_to_vector(find_tensor(tensors, prefix + ".b"));
        if (layer.bias().size() != w.rows()) {
            throw Error(Errc::ShapeMismatch, "bias size mismatch for '" + prefix + "'");
        }
    }
    return layer;
}

} // namespace syntrans::nn
