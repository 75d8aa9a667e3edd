#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfus/signal.hpp"
#include "sfus/tensor.hpp"

namespace sfus::data {

/// Bad magic, unsupported version, truncated payload or schema violation.
class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RecordingHeader {
  std::string subject_id;
  Modality modality = Modality::kSceeg;
  std::string channel;
  double rate_hz = 0.0;
  bool preprocessed = false;
  std::string config_hash;  // 16 hex digits when preprocessed
  /// Raw: {n}. Preprocessed: {epochs, epoch_len}.
  Shape shape;
};

/// "SREC", u32 version, u32 header length, UTF-8 JSON header, f32 LE payload.
struct RecordingContainer {
  static constexpr std::uint32_t kVersion = 1;

  RecordingHeader header;
  std::vector<float> payload;

  static RecordingContainer from_raw(const RawRecording& rec);
  static RecordingContainer from_epochs(const RawRecording& source, const Tensor& epochs,
                                        double epoch_rate_hz, std::uint64_t config_hash);

  RawRecording to_raw() const;
  Tensor to_epochs() const;
};

std::vector<std::uint8_t> encode_container(const RecordingContainer& c);
RecordingContainer decode_container(std::span<const std::uint8_t> bytes);
void write_container(const std::filesystem::path& path, const RecordingContainer& c);
RecordingContainer read_container(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace sfus::data
