// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/edf.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "sleeptl/error.hpp"

namespace sleeptl {
namespace {

constexpr std::size_t kMainHeaderBytes = 256;
constexpr std::size_t kSignalHeaderBytes = 256;
constexpr std::string_view kAnnotationLabel = "EDF Annotations";

std::string trim_field(std::string_view s) {
  auto b = s.find_first_not_of(' ');
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(' ');
  return std::string(s.substr(b, e - b + 1));
}

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::string text(std::size_t width, const std::string& field) {
    if (pos_ + width > bytes_.size()) {
      throw ParseError(field, "header truncated");
    }
    std::string_view view(reinterpret_cast<const char*>(bytes_.data()) + pos_, width);
    pos_ += width;
    return trim_field(view);
  }

  long integer(std::size_t width, const std::string& field) {
    auto s = text(width, field);
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
      throw ParseError(field, "expected an integer, got '" + s + "'");
    }
    return v;
  }

  double real(std::size_t width, const std::string& field) {
    auto s = text(width, field);
    // from_chars(double) rejects a leading '+'.
    std::string_view v = s;
    if (!v.empty() && v.front() == '+') v.remove_prefix(1);
    double d = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
      throw ParseError(field, "expected a number, got '" + s + "'");
    }
    return d;
  }

  std::size_t position() const { return pos_; }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

double parse_tal_number(std::string_view s, const char* what) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double d = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("EDF Annotations", std::string("bad TAL ") + what);
  }
  return d;
}

void parse_tals(std::string_view block, std::vector<EdfAnnotation>& out) {
  std::size_t pos = 0;
  while (pos < block.size()) {
    auto end = block.find('\0', pos);
    if (end == std::string_view::npos) end = block.size();
    std::string_view tal = block.substr(pos, end - pos);
    pos = end + 1;
    if (tal.empty()) continue;

    auto first_sep = tal.find('\x14');
    if (first_sep == std::string_view::npos) {
      throw ParseError("EDF Annotations", "TAL without onset separator");
    }
    std::string_view timing = tal.substr(0, first_sep);
    double onset = 0, duration = 0;
    auto dur_sep = timing.find('\x15');
    if (dur_sep == std::string_view::npos) {
      onset = parse_tal_number(timing, "onset");
    } else {
      onset = parse_tal_number(timing.substr(0, dur_sep), "onset");
      duration = parse_tal_number(timing.substr(dur_sep + 1), "duration");
    }
    std::size_t tpos = first_sep + 1;
    while (tpos < tal.size()) {
      auto tend = tal.find('\x14', tpos);
      if (tend == std::string_view::npos) tend = tal.size();
      if (tend > tpos) {
        out.push_back({onset, duration, std::string(tal.substr(tpos, tend - tpos))});
      }
      tpos = tend + 1;
    }
  }
}

}  // namespace

EdfContents parse_edf(std::span<const std::byte> bytes) {
  EdfContents out;
  EdfHeader& h = out.header;
  HeaderReader r(bytes);

  h.version = r.text(8, "version");
  if (h.version != "0") throw ParseError("version", "expected '0', got '" + h.version + "'");
  h.patient = r.text(80, "patient_id");
  h.recording = r.text(80, "recording_id");
  h.start_date = r.text(8, "start_date");
  h.start_time = r.text(8, "start_time");
  long header_bytes = r.integer(8, "header_bytes");
  h.reserved = r.text(44, "reserved");
  long n_records = r.integer(8, "number_of_data_records");
  h.record_duration_s = r.real(8, "data_record_duration");
  long ns = r.integer(4, "number_of_signals");

  if (ns <= 0) throw ParseError("number_of_signals", "must be positive");
  if (header_bytes != static_cast<long>(kMainHeaderBytes + kSignalHeaderBytes * ns)) {
    throw ParseError("header_bytes", "expected 256 * (signals + 1) = " +
                                         std::to_string(kMainHeaderBytes +
                                                        kSignalHeaderBytes * ns));
  }
  if (!(h.record_duration_s > 0)) {
    throw ParseError("data_record_duration", "must be positive");
  }
  h.header_bytes = static_cast<std::size_t>(header_bytes);

  auto n = static_cast<std::size_t>(ns);
  h.signals.resize(n);
  auto per_signal = [&](auto&& fn) {
    for (std::size_t i = 0; i < n; ++i) fn(h.signals[i], i);
  };
  auto name = [](const char* f, std::size_t i) {
    return std::string(f) + "[" + std::to_string(i) + "]";
  };
  per_signal([&](auto& s, auto i) { s.label = r.text(16, name("label", i)); });
  per_signal([&](auto& s, auto i) { s.transducer = r.text(80, name("transducer", i)); });
  per_signal([&](auto& s, auto i) {
    s.physical_dimension = r.text(8, name("physical_dimension", i));
  });
  per_signal([&](auto& s, auto i) { s.physical_min = r.real(8, name("physical_min", i)); });
  per_signal([&](auto& s, auto i) { s.physical_max = r.real(8, name("physical_max", i)); });
  per_signal([&](auto& s, auto i) { s.digital_min = r.integer(8, name("digital_min", i)); });
  per_signal([&](auto& s, auto i) { s.digital_max = r.integer(8, name("digital_max", i)); });
  per_signal([&](auto& s, auto i) { s.prefiltering = r.text(80, name("prefiltering", i)); });
  per_signal([&](auto& s, auto i) {
    long v = r.integer(8, name("samples_per_record", i));
    if (v <= 0) throw ParseError(name("samples_per_record", i), "must be positive");
    s.samples_per_record = static_cast<std::size_t>(v);
  });
  per_signal([&](auto&, auto i) { r.text(32, name("signal_reserved", i)); });

  std::size_t record_samples = 0;
  for (const auto& s : h.signals) record_samples += s.samples_per_record;
  const std::size_t record_bytes = record_samples * 2;
  const std::size_t data_bytes = bytes.size() - h.header_bytes;

  if (n_records == -1) {
    // Unknown record count: infer from the file size.
    if (data_bytes % record_bytes != 0) {
      throw ParseError("number_of_data_records", "data size is not a whole number of records");
    }
    n_records = static_cast<long>(data_bytes / record_bytes);
  }
  if (n_records < 0) throw ParseError("number_of_data_records", "must be >= 0 or -1");
  h.n_records = static_cast<std::size_t>(n_records);
  if (data_bytes < h.n_records * record_bytes) {
    throw ParseError("number_of_data_records",
                     "header promises " + std::to_string(h.n_records) + " records but only " +
                         std::to_string(data_bytes / record_bytes) + " are present");
  }

  std::vector<std::size_t> channel_of(n, SIZE_MAX);
  std::vector<double> scale(n), offset(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = h.signals[i];
    if (s.label == kAnnotationLabel) continue;
    if (s.physical_max == s.physical_min) {
      throw ParseError(name("physical_max", i), "equals physical_min (degenerate calibration)");
    }
    if (s.digital_max == s.digital_min) {
      throw ParseError(name("digital_max", i), "equals digital_min (degenerate calibration)");
    }
    scale[i] = (s.physical_max - s.physical_min) /
               static_cast<double>(s.digital_max - s.digital_min);
    offset[i] = s.physical_min - scale[i] * static_cast<double>(s.digital_min);
    channel_of[i] = out.channels.size();
    Channel ch;
    ch.name = s.label;
    ch.sample_rate_hz = static_cast<double>(s.samples_per_record) / h.record_duration_s;
    ch.samples.reserve(s.samples_per_record * h.n_records);
    out.channels.push_back(std::move(ch));
  }

  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data()) + h.header_bytes;
  std::size_t pos = 0;
  for (std::size_t rec = 0; rec < h.n_records; ++rec) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto count = h.signals[i].samples_per_record;
      if (channel_of[i] == SIZE_MAX) {
        std::string_view block(reinterpret_cast<const char*>(data + pos), count * 2);
        parse_tals(block, out.annotations);
      } else {
        auto& samples = out.channels[channel_of[i]].samples;
        for (std::size_t k = 0; k < count; ++k) {
          auto raw = static_cast<std::int16_t>(
              static_cast<std::uint16_t>(data[pos + 2 * k]) |
              static_cast<std::uint16_t>(data[pos + 2 * k + 1] << 8));
          samples.push_back(scale[i] * raw + offset[i]);
        }
      }
      pos += count * 2;
    }
  }
  return out;
}

EdfContents read_edf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open EDF file " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_edf(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace sleeptl
