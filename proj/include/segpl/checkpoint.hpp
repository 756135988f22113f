/* Copyright 2026 The SegPL Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SEGPL_CHECKPOINT_HPP_
#define SEGPL_CHECKPOINT_HPP_

// Single-file checkpoint archive:
//
//   magic "SEGPLCKP" | u32 version | u32 header crc32 | u64 header bytes
//   | u32 payload crc32 | u64 payload bytes | header JSON | float32 payload
//
// The header JSON carries the UNetConfig, the TrainConfig and an index of
// parameter arrays (name, shape, offset, count) into the payload.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "segpl/error.hpp"
#include "segpl/nn/unet.hpp"
#include "segpl/trainer.hpp"

namespace segpl {

inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'G', 'P', 'L', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  UNet<float> model;
  TrainConfig config;
  nlohmann::json extra;
};

namespace detail {

inline std::uint32_t crc(const void* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& is, const std::string& path) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) throw IntegrityError(path + " is truncated");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const UNet<float>& model,
                            const TrainConfig& config,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  std::vector<float> payload;
  nlohmann::json index = nlohmann::json::array();
  for (const auto* p : model.parameters()) {
    index.push_back({{"name", p->name}, {"shape", p->shape},
                     {"offset", payload.size()}, {"count", p->size()}});
    payload.insert(payload.end(), p->value.begin(), p->value.end());
  }
  const nlohmann::json header = {{"unet", model.config()},
                                 {"train", config},
                                 {"extra", extra},
                                 {"tensors", index}};
  const std::string hs = header.dump();
  const std::size_t pbytes = payload.size() * sizeof(float);

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put<std::uint32_t>(os, kCheckpointVersion);
    detail::put<std::uint32_t>(os, detail::crc(hs.data(), hs.size()));
    detail::put<std::uint64_t>(os, hs.size());
    detail::put<std::uint32_t>(os, detail::crc(payload.data(), pbytes));
    detail::put<std::uint64_t>(os, pbytes);
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(pbytes));
    if (!os) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string ps = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint " + ps + " not found");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IntegrityError(ps + " is not a checkpoint archive");
  }
  const auto version = detail::get<std::uint32_t>(is, ps);
  if (version != kCheckpointVersion) {
    throw IntegrityError(ps + " has version " + std::to_string(version) + ", expected " +
                         std::to_string(kCheckpointVersion));
  }
  const auto hcrc = detail::get<std::uint32_t>(is, ps);
  const auto hlen = detail::get<std::uint64_t>(is, ps);
  const auto pcrc = detail::get<std::uint32_t>(is, ps);
  const auto plen = detail::get<std::uint64_t>(is, ps);
  if (hlen > (1ull << 30) || plen > (1ull << 36) || plen % sizeof(float) != 0) {
    throw IntegrityError(ps + " has an implausible header");
  }
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  std::vector<float> payload(plen / sizeof(float));
  is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(plen));
  if (!is) throw IntegrityError(ps + " is truncated");
  if (detail::crc(hs.data(), hs.size()) != hcrc) {
    throw IntegrityError(ps + ": header checksum mismatch");
  }
  if (detail::crc(payload.data(), plen) != pcrc) {
    throw IntegrityError(ps + ": payload checksum mismatch");
  }

  nlohmann::json header;
  UNetConfig ucfg;
  TrainConfig tcfg;
  std::map<std::string, std::vector<float>> state;
  try {
    header = nlohmann::json::parse(hs);
    ucfg = header.at("unet").get<UNetConfig>();
    tcfg = header.at("train").get<TrainConfig>();
    for (const auto& t : header.at("tensors")) {
      const auto off = t.at("offset").get<std::size_t>();
      const auto count = t.at("count").get<std::size_t>();
      if (off + count > payload.size()) throw IntegrityError(ps + ": tensor index out of range");
      state[t.at("name").get<std::string>()] =
          std::vector<float>(payload.begin() + off, payload.begin() + off + count);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(ps + ": malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(ps + ": malformed header: " + e.what());
  }
  Checkpoint ck{UNet<float>(ucfg), tcfg, header.value("extra", nlohmann::json::object())};
  ck.model.load_state(state);
  return ck;
}

}  // namespace segpl

#endif  // SEGPL_CHECKPOINT_HPP_
