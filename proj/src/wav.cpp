#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "drcbench/audio.hpp"
#include "drcbench/errors.hpp"

namespace drc {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& bytes, std::string path)
        : bytes_(bytes), path_(std::move(path)) {}

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t pos() const { return pos_; }
    void seek(std::size_t p) { pos_ = p; }

    void need(std::size_t n, const char* field) const {
        if (remaining() < n)
            throw FormatError(path_ + ": truncated file while reading " + field);
    }
    std::uint16_t u16(const char* field) {
        need(2, field);
        const std::uint16_t v = bytes_[pos_] | (bytes_[pos_ + 1] << 8);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
        pos_ += 4;
        return v;
    }
    std::string tag(const char* field) {
        need(4, field);
        std::string t(bytes_.begin() + pos_, bytes_.begin() + pos_ + 4);
        pos_ += 4;
        return t;
    }
    const std::uint8_t* data() const { return bytes_.data() + pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(v & 0xFF);
    out.push_back(v >> 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

void put_tag(std::vector<std::uint8_t>& out, const char* t) { out.insert(out.end(), t, t + 4); }

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
    const std::string name = path.string();
    ByteReader r(bytes, name);

    if (r.tag("RIFF header") != "RIFF") throw FormatError(name + ": missing RIFF header");
    r.u32("RIFF size");
    if (r.tag("WAVE tag") != "WAVE") throw FormatError(name + ": missing WAVE tag");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    while (true) {
        if (r.remaining() < 8) {
            throw FormatError(name + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
        }
        const std::string id = r.tag("chunk id");
        const std::uint32_t size = r.u32("chunk size");
        const std::size_t body = r.pos();
        if (id == "fmt ") {
            r.need(16, "fmt chunk");
            format = r.u16("format_tag");
            channels = r.u16("channels");
            rate = r.u32("sample_rate");
            r.u32("byte_rate");
            r.u16("block_align");
            bits = r.u16("bits_per_sample");
            if (format == kFormatExtensible) {
                r.need(size - 16, "fmt extension");
                r.u16("cb_size");
                r.u16("valid_bits");
                r.u32("channel_mask");
                format = r.u16("subformat");
            }
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw FormatError(name + ": data chunk precedes fmt chunk");
            if (channels != 1)
                throw FormatError(name + ": unsupported channels=" + std::to_string(channels) +
                                  " (mono only)");
            if (rate == 0) throw FormatError(name + ": sample_rate is zero");
            const bool pcm16 = format == kFormatPcm && bits == 16;
            const bool f32 = format == kFormatFloat && bits == 32;
            if (!pcm16 && !f32)
                throw FormatError(name + ": unsupported encoding format_tag=" +
                                  std::to_string(format) +
                                  " bits_per_sample=" + std::to_string(bits));
            r.need(size, "data chunk");
            const std::size_t width = bits / 8;
            if (size % width != 0) throw FormatError(name + ": data chunk size not sample aligned");
            AudioClip clip;
            clip.sample_rate = static_cast<int>(rate);
            clip.id = path.stem().string();
            clip.samples.resize(size / width);
            const std::uint8_t* p = r.data();
            for (std::size_t i = 0; i < clip.samples.size(); ++i, p += width) {
                if (pcm16) {
                    const auto v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
                    clip.samples[i] = std::max(-1.0f, static_cast<float>(v) / 32767.0f);
                } else {
                    const std::uint32_t u = p[0] | (p[1] << 8) | (p[2] << 16) |
                                            (static_cast<std::uint32_t>(p[3]) << 24);
                    clip.samples[i] = std::bit_cast<float>(u);
                }
            }
            if (clip.samples.empty()) throw FormatError(name + ": data chunk is empty");
            return clip;
        }
        r.need(size, "chunk body");
        r.seek(body + size + (size & 1));
    }
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path, WavEncoding encoding) {
    const bool f32 = encoding == WavEncoding::float32;
    const std::uint16_t bits = f32 ? 32 : 16;
    const std::uint32_t data_size = static_cast<std::uint32_t>(clip.size() * (bits / 8));

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_size);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, f32 ? kFormatFloat : kFormatPcm);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
    put_u16(out, bits / 8);
    put_u16(out, bits);
    put_tag(out, "data");
    put_u32(out, data_size);
    for (float s : clip.samples) {
        if (f32) {
            put_u32(out, std::bit_cast<std::uint32_t>(s));
        } else {
            const float c = std::clamp(s, -1.0f, 1.0f);
            put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0f))));
        }
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace drc
