#include "sfus/data/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "sfus/nn/checkpoint.hpp"

namespace sfus::data {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'R', 'E', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

json header_to_json(const RecordingHeader& h) {
  json j;
  j["subject_id"] = h.subject_id;
  j["modality"] = std::string(modality_name(h.modality));
  j["channel"] = h.channel;
  j["rate_hz"] = h.rate_hz;
  j["preprocessed"] = h.preprocessed;
  j["config_hash"] = h.config_hash;
  j["shape"] = h.shape;
  return j;
}

template <typename T>
T require(const json& j, const char* key, json::value_t type) {
  if (!j.contains(key)) throw ContainerError(std::string("container header: missing '") + key + "'");
  const json& v = j.at(key);
  const bool numeric_ok = type == json::value_t::number_float && v.is_number();
  const bool unsigned_ok = type == json::value_t::number_unsigned && v.is_number_unsigned();
  if (v.type() != type && !numeric_ok && !unsigned_ok) {
    throw ContainerError(std::string("container header: '") + key + "' has wrong type");
  }
  return v.get<T>();
}

RecordingHeader header_from_json(const json& j) {
  if (!j.is_object()) throw ContainerError("container header: not a JSON object");
  RecordingHeader h;
  h.subject_id = require<std::string>(j, "subject_id", json::value_t::string);
  try {
    h.modality = parse_modality(require<std::string>(j, "modality", json::value_t::string));
  } catch (const std::invalid_argument& e) {
    throw ContainerError(std::string("container header: ") + e.what());
  }
  h.channel = require<std::string>(j, "channel", json::value_t::string);
  h.rate_hz = require<double>(j, "rate_hz", json::value_t::number_float);
  h.preprocessed = require<bool>(j, "preprocessed", json::value_t::boolean);
  h.config_hash = require<std::string>(j, "config_hash", json::value_t::string);
  const json& shape = j.contains("shape") ? j.at("shape") : json();
  if (!shape.is_array() || shape.empty()) throw ContainerError("container header: 'shape' must be a non-empty array");
  for (const json& d : shape) {
    if (!d.is_number_unsigned()) throw ContainerError("container header: shape entries must be unsigned");
    h.shape.push_back(d.get<std::size_t>());
  }
  if (!(h.rate_hz > 0.0)) throw ContainerError("container header: rate_hz must be positive");
  if (h.preprocessed != (h.shape.size() == 2)) {
    throw ContainerError("container header: preprocessed data is [epochs, len], raw data is [n]");
  }
  return h;
}

}  // namespace

RecordingContainer RecordingContainer::from_raw(const RawRecording& rec) {
  rec.validate();
  RecordingContainer c;
  c.header = {rec.subject_id, rec.modality, rec.channel, rec.rate_hz, false, "", {rec.samples.size()}};
  c.payload.assign(rec.samples.begin(), rec.samples.end());
  return c;
}

RecordingContainer RecordingContainer::from_epochs(const RawRecording& source, const Tensor& epochs,
                                                   double epoch_rate_hz, std::uint64_t config_hash) {
  if (epochs.rank() != 2) throw ShapeError("from_epochs: epochs must be [n, len]");
  RecordingContainer c;
  c.header = {source.subject_id, source.modality, source.channel, epoch_rate_hz, true,
              nn::hex64(config_hash), epochs.shape()};
  c.payload.assign(epochs.values().begin(), epochs.values().end());
  return c;
}

RawRecording RecordingContainer::to_raw() const {
  RawRecording r;
  r.samples.assign(payload.begin(), payload.end());
  r.rate_hz = header.rate_hz;
  r.modality = header.modality;
  r.subject_id = header.subject_id;
  r.channel = header.channel;
  return r;
}

Tensor RecordingContainer::to_epochs() const {
  if (!header.preprocessed) throw ContainerError("container '" + header.subject_id + "' is not preprocessed");
  return Tensor(header.shape, std::vector<double>(payload.begin(), payload.end()));
}

std::vector<std::uint8_t> encode_container(const RecordingContainer& c) {
  if (shape_size(c.header.shape) != c.payload.size()) {
    throw ContainerError("encode_container: shape does not match payload size");
  }
  const std::string header = header_to_json(c.header).dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, RecordingContainer::kVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.reserve(out.size() + 4 * c.payload.size());
  for (float f : c.payload) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

RecordingContainer decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ContainerError("not an SREC container (bad magic)");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != RecordingContainer::kVersion) {
    throw ContainerError("unsupported SREC version " + std::to_string(version));
  }
  const std::uint32_t header_len = get_u32(bytes, 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) throw ContainerError("truncated SREC header");
  json j;
  try {
    j = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const json::parse_error& e) {
    throw ContainerError(std::string("container header: invalid JSON: ") + e.what());
  }
  RecordingContainer c;
  c.header = header_from_json(j);
  const std::size_t count = shape_size(c.header.shape);
  const std::size_t payload_bytes = bytes.size() - 12 - header_len;
  if (payload_bytes != 4 * count) {
    throw ContainerError("SREC payload holds " + std::to_string(payload_bytes) + " bytes, header declares " +
                         std::to_string(count) + " samples");
  }
  c.payload.resize(count);
  for (std::size_t i = 0; i < count; ++i) c.payload[i] = std::bit_cast<float>(get_u32(bytes, 12 + header_len + 4 * i));
  return c;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContainerError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ContainerError("write failed for " + path.string());
}

void write_container(const std::filesystem::path& path, const RecordingContainer& c) {
  write_file_bytes(path, encode_container(c));
}

RecordingContainer read_container(const std::filesystem::path& path) {
  return decode_container(read_file_bytes(path));
}

}  // namespace sfus::data
