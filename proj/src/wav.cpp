#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "lmac/dsp.hpp"
#include "lmac/error.hpp"

namespace lmac {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void write_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF),
                              static_cast<char>((v >> 24) & 0xFF)};
  os.write(b.data(), 4);
}

void write_u16(std::ostream& os, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
  os.write(b.data(), 2);
}

}  // namespace

AudioClip wav_read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingPrerequisite("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  const std::string where = " (" + path.string() + ")";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file" + where);
  }
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw FormatError("truncated WAV chunk" + where);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("malformed fmt chunk" + where);
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk" + where);
      if (format != 1) throw FormatError("unsupported WAV encoding (PCM only)" + where);
      if (channels != 1) throw FormatError("unsupported channel count " + std::to_string(channels) + where);
      if (bits != 16) throw FormatError("unsupported bit depth " + std::to_string(bits) + where);
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw FormatError("unsupported sample rate " + std::to_string(rate) + where);
      }
      AudioClip clip;
      clip.sample_rate = kSampleRate;
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        clip.samples[i] = static_cast<float>(raw) / 32768.0f;
      }
      return clip;
    }
    pos = body + size + (size & 1);
  }
  throw FormatError("WAV file has no data chunk" + where);
}

void wav_write(const std::filesystem::path& path, const AudioClip& clip) {
  if (clip.sample_rate != kSampleRate) throw ConfigError("wav_write: sample rate must be 16 kHz");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  os.write("RIFF", 4);
  write_u32(os, 36 + 2 * n);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_u32(os, 16);
  write_u16(os, 1);
  write_u16(os, 1);
  write_u32(os, kSampleRate);
  write_u32(os, kSampleRate * 2);
  write_u16(os, 2);
  write_u16(os, 16);
  os.write("data", 4);
  write_u32(os, 2 * n);
  std::size_t clipped = 0;
  for (float s : clip.samples) {
    double v = std::round(static_cast<double>(s) * 32768.0);
    if (v > 32767.0 || v < -32768.0) {
      if (std::abs(s) > 1.0f) ++clipped;
      v = std::clamp(v, -32768.0, 32767.0);
    }
    write_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  if (clipped > 0) {
    std::cerr << "warning: " << clipped << " samples saturated while writing " << path.string()
              << '\n';
  }
  if (!os) throw Error("write failed for " + path.string());
}

}  // namespace lmac
