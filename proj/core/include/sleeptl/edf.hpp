// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sleeptl/recording.hpp"

namespace sleeptl {

struct EdfAnnotation {
  double onset_s = 0.0;
  double duration_s = 0.0;
  std::string text;
};

struct EdfSignalHeader {
  std::string label;
  std::string transducer;
  std::string physical_dimension;
  double physical_min = 0.0;
  double physical_max = 0.0;
  long digital_min = 0;
  long digital_max = 0;
  std::string prefiltering;
  std::size_t samples_per_record = 0;
};

struct EdfHeader {
  std::string version;
  std::string patient;
  std::string recording;
  std::string start_date;
  std::string start_time;
  std::size_t header_bytes = 0;
  std::string reserved;
  std::size_t n_records = 0;
  double record_duration_s = 0.0;
  std::vector<EdfSignalHeader> signals;

  bool is_edf_plus() const { return reserved.rfind("EDF+", 0) == 0; }
};

/// Contents of an EDF/EDF+ file: calibrated signal channels (annotation
/// signals excluded) plus any EDF+ time-stamped annotations.
struct EdfContents {
  EdfHeader header;
  std::vector<Channel> channels;
  std::vector<EdfAnnotation> annotations;
};

/// Parses an in-memory EDF/EDF+ file. Digital samples are mapped to physical
/// units with the header min/max fields. Throws ParseError naming the field
/// at fault for malformed headers, degenerate calibration, or a data section
/// shorter than the header promises.
EdfContents parse_edf(std::span<const std::byte> bytes);

EdfContents read_edf(const std::filesystem::path& path);

}  // namespace sleeptl
