/* Copyright 2026 The epdsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace epdsim {

enum class StageKind { kEncode, kPrefill, kDecode };
enum class OpKind { kQkvoProj, kFfn, kAttention };

const char* to_string(StageKind stage);
const char* to_string(OpKind op);

// Architecture constants for the vision tower and the language model.
struct ModelProfile {
  std::string name = "custom";
  std::int64_t lang_hidden = 4096;
  std::int64_t lang_heads = 32;
  std::int64_t lang_layers = 32;
  std::int64_t vision_hidden = 1024;
  std::int64_t vision_heads = 16;
  std::int64_t vision_layers = 24;
  double kv_head_ratio = 1.0;
  std::int64_t dtype_bytes = 2;
  // Intermediate/hidden ratio. The FFN rows of the cost table hard-code 4.
  std::int64_t ffn_ratio = 4;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct HardwareProfile {
  std::string name = "h20-like";
  double peak_flops = 148e12;
  double mem_bandwidth = 4.8e12;
  double gpu_memory_bytes = 141e9;
  double model_weight_bytes = 15e9;
  double interconnect_bandwidth = 200e9;
  double migration_fixed_overhead = 0.5e-3;
  double batch_fixed_overhead = 1e-3;

  void validate() const;
};

// Returns the named preset or throws std::invalid_argument.
ModelProfile model_preset(const std::string& name);
std::vector<std::string> model_preset_names();

struct WorkVector {
  double flops = 0.0;
  double bytes = 0.0;

  WorkVector& operator+=(const WorkVector& other) {
    flops += other.flops;
    bytes += other.bytes;
    return *this;
  }
  friend WorkVector operator+(WorkVector a, const WorkVector& b) {
    a += b;
    return a;
  }
  bool empty() const { return flops == 0.0 && bytes == 0.0; }
};

// Per-layer FLOPs of one operation. `tokens` is the per-image token count T
// for encode and the sequence length S for prefill/decode. Decode projections
// and FFN ignore `tokens`.
std::uint64_t op_flops(OpKind op, StageKind stage, std::uint64_t batch,
                       std::uint64_t tokens, std::uint64_t hidden);

// Per-layer memory access in elements (not bytes). `heads` only matters for
// attention rows.
std::uint64_t op_mem_elems(OpKind op, StageKind stage, std::uint64_t batch,
                           std::uint64_t tokens, std::uint64_t hidden,
                           std::uint64_t heads);

// The shape of one engine iteration as seen by the cost model.
struct BatchShape {
  std::vector<std::uint64_t> image_tokens;     // one entry per image
  std::vector<std::uint64_t> prefill_chunks;   // one entry per request
  std::vector<std::uint64_t> decode_contexts;  // KV length per decode entry

  bool empty() const {
    return image_tokens.empty() && prefill_chunks.empty() &&
           decode_contexts.empty();
  }
};

struct StreamWork {
  WorkVector vision;
  WorkVector language;
};

// Sums the cost-table rows over every request in the batch and over layers.
// Weight reads are charged once per stream per layer, and only when the
// stream has work.
StreamWork batch_work(const BatchShape& shape, const ModelProfile& model);

// Convenience form for `images` images of `tokens_per_image` each.
StreamWork batch_work(std::uint64_t images, std::uint64_t tokens_per_image,
                      std::span<const std::uint64_t> prefill_chunks,
                      std::span<const std::uint64_t> decode_contexts,
                      const ModelProfile& model);

class UndefinedIntensity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// FLOPs per byte. Throws UndefinedIntensity when bytes == 0.
double arithmetic_intensity(const WorkVector& work);

double roofline_latency(const WorkVector& work, const HardwareProfile& hw);

// Both streams share one device, so their FLOPs and bytes pool.
double dual_stream_latency(const WorkVector& vision, const WorkVector& language,
                           const HardwareProfile& hw);

// Vision then language on the same device, each paying the batch overhead.
double sequential_latency(const WorkVector& vision, const WorkVector& language,
                          const HardwareProfile& hw);

inline constexpr std::uint64_t kKvBlockTokens = 16;
inline constexpr std::uint64_t kImageBlockTokens = 576;

std::uint64_t blocks_for(std::uint64_t tokens, std::uint64_t block_tokens);

double kv_bytes_per_token(const ModelProfile& model);
double kv_cache_bytes(std::uint64_t tokens, const ModelProfile& model);
double image_bytes_per_token(const ModelProfile& model);
double image_cache_bytes(std::uint64_t visual_tokens, const ModelProfile& model);

}  // namespace epdsim
