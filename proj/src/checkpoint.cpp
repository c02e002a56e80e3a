#include "drcbench/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "binio.hpp"
#include "drcbench/errors.hpp"

namespace drc {

void write_checkpoint(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("DRCW", 4);
    binio::put_u32(out, kCheckpointVersion);
    for (const NamedTensor& t : tensors) {
        if (ad::shape_numel(t.shape) != t.data.size())
            throw ShapeError("checkpoint tensor '" + t.name + "' data does not match its shape");
        binio::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        binio::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) binio::put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : t.data) binio::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
    const std::vector<char> bytes = binio::slurp(path);
    const std::string where = path.string() + ": ";
    if (bytes.size() < 8 || std::string(bytes.data(), 4) != "DRCW") throw FormatError(where + "missing DRCW header");
    const std::uint32_t version = binio::get_u32(bytes, 4);
    if (version != kCheckpointVersion)
        throw FormatError(where + "unsupported checkpoint version " + std::to_string(version));

    std::size_t at = 8;
    auto need = [&](std::size_t n, const char* what) {
        if (bytes.size() - at < n) throw FormatError(where + "truncated while reading " + what);
    };
    std::vector<NamedTensor> out;
    while (at < bytes.size()) {
        NamedTensor t;
        need(4, "name length");
        const std::uint32_t len = binio::get_u32(bytes, at);
        at += 4;
        need(len, "name");
        t.name.assign(bytes.data() + at, len);
        at += len;
        need(4, "rank");
        const std::uint32_t rank = binio::get_u32(bytes, at);
        at += 4;
        need(4ull * rank, "dims");
        for (std::uint32_t r = 0; r < rank; ++r, at += 4) t.shape.push_back(binio::get_u32(bytes, at));
        const std::size_t n = ad::shape_numel(t.shape);
        need(4 * n, "payload");
        t.data.resize(n);
        for (std::size_t i = 0; i < n; ++i, at += 4) t.data[i] = std::bit_cast<float>(binio::get_u32(bytes, at));
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace drc
