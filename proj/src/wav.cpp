#include "vfo/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "vfo/errors.hpp"

namespace vfo {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put32(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>(v & 0xFF));
    s.push_back(static_cast<char>((v >> 8) & 0xFF));
    s.push_back(static_cast<char>((v >> 16) & 0xFF));
    s.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put16(std::string& s, std::uint16_t v) {
    s.push_back(static_cast<char>(v & 0xFF));
    s.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

SampledSignal load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open wav file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw DataError("corrupt wav header (not RIFF/WAVE): " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::uint32_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t len = le32(bytes.data() + pos + 4);
        if (pos + 8 + len > bytes.size())
            throw DataError("corrupt wav chunk (truncated): " + path);
        const unsigned char* body = bytes.data() + pos + 8;
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw DataError("corrupt wav fmt chunk: " + path);
            format = le16(body);
            channels = le16(body + 2);
            rate = le32(body + 4);
            bits = le16(body + 14);
            if (format == kFormatExtensible) {
                if (len < 26) throw DataError("corrupt wav extensible fmt chunk: " + path);
                format = le16(body + 24);  // first field of the subformat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = body;
            data_len = len;
        }
        pos += 8 + len + (len & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr) throw DataError("corrupt wav (missing fmt/data): " + path);
    if (channels == 0 || rate == 0) throw DataError("corrupt wav fmt values: " + path);
    const bool pcm16 = (format == kFormatPcm && bits == 16);
    const bool f32 = (format == kFormatFloat && bits == 32);
    if (!pcm16 && !f32)
        throw DataError("unsupported wav encoding (need PCM16 or float32): " + path);

    const std::uint32_t frame_bytes = channels * (bits / 8u);
    const std::uint32_t frames = data_len / frame_bytes;
    if (frames == 0) throw DataError("wav contains no audio samples: " + path);

    SampledSignal sig;
    sig.sample_rate = rate;
    sig.samples.resize(frames);
    for (std::uint32_t i = 0; i < frames; ++i) {
        const unsigned char* f = data + static_cast<std::size_t>(i) * frame_bytes;
        if (pcm16) {
            const auto raw = static_cast<std::int16_t>(le16(f));
            sig.samples[i] = raw / 32768.0;
        } else {
            float v;
            std::memcpy(&v, f, 4);
            sig.samples[i] = v;
        }
    }
    for (double v : sig.samples)
        if (!std::isfinite(v)) throw DataError("wav contains non-finite samples: " + path);
    sig.label = path;
    if (channels > 1)
        sig.label += " (channel 0 of " + std::to_string(channels) + "; other channels dropped)";
    return sig;
}

void write_wav(const std::string& path, const SampledSignal& signal, WavEncoding encoding) {
    if (signal.samples.empty()) throw DataError("refusing to write empty wav: " + path);
    if (!(signal.sample_rate > 0)) throw DataError("sample rate must be positive: " + path);
    const auto rate = static_cast<std::uint32_t>(std::lround(signal.sample_rate));
    const std::uint16_t bits = (encoding == WavEncoding::pcm16) ? 16 : 32;
    const std::uint16_t fmt = (encoding == WavEncoding::pcm16) ? kFormatPcm : kFormatFloat;
    const auto n = static_cast<std::uint32_t>(signal.samples.size());
    const std::uint32_t data_len = n * (bits / 8u);

    std::string out;
    out.reserve(44 + data_len);
    out += "RIFF";
    put32(out, 36 + data_len);
    out += "WAVEfmt ";
    put32(out, 16);
    put16(out, fmt);
    put16(out, 1);  // mono
    put32(out, rate);
    put32(out, rate * (bits / 8u));
    put16(out, static_cast<std::uint16_t>(bits / 8u));
    put16(out, bits);
    out += "data";
    put32(out, data_len);
    for (double v : signal.samples) {
        if (encoding == WavEncoding::pcm16) {
            const double clipped = std::clamp(v, -1.0, 32767.0 / 32768.0);
            put16(out, static_cast<std::uint16_t>(
                           static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
        } else {
            const auto f = static_cast<float>(v);
            std::uint32_t raw;
            std::memcpy(&raw, &f, 4);
            put32(out, raw);
        }
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw DataError("write failed: " + path);
}

}
