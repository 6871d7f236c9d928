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

#include "epdsim/model_cost.h"

#include <algorithm>
#include <map>

namespace epdsim {

const char* to_string(StageKind stage) {
  switch (stage) {
    case StageKind::kEncode:
      return "encode";
    case StageKind::kPrefill:
      return "prefill";
    case StageKind::kDecode:
      return "decode";
  }
  return "?";
}

const char* to_string(OpKind op) {
  switch (op) {
    case OpKind::kQkvoProj:
      return "qkvo_proj";
    case OpKind::kFfn:
      return "ffn";
    case OpKind::kAttention:
      return "attention";
  }
  return "?";
}

void ModelProfile::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) {
      throw std::invalid_argument(std::string("model profile: ") + what);
    }
  };
  require(lang_hidden >= 1 && lang_heads >= 1 && lang_layers >= 1,
          "language counts must be >= 1");
  require(vision_hidden >= 1 && vision_heads >= 1 && vision_layers >= 1,
          "vision counts must be >= 1");
  require(lang_hidden % lang_heads == 0,
          "lang_hidden must be divisible by lang_heads");
  require(vision_hidden % vision_heads == 0,
          "vision_hidden must be divisible by vision_heads");
  require(kv_head_ratio > 0.0 && kv_head_ratio <= 1.0,
          "kv_head_ratio must be in (0, 1]");
  require(dtype_bytes == 1 || dtype_bytes == 2 || dtype_bytes == 4,
          "dtype_bytes must be 1, 2 or 4");
  require(ffn_ratio == 4, "ffn_ratio is fixed at 4 by the cost formulas");
}

void HardwareProfile::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) {
      throw std::invalid_argument(std::string("hardware profile: ") + what);
    }
  };
  require(peak_flops > 0 && mem_bandwidth > 0 && gpu_memory_bytes > 0 &&
              model_weight_bytes > 0 && interconnect_bandwidth > 0,
          "rates and capacities must be > 0");
  require(migration_fixed_overhead >= 0 && batch_fixed_overhead >= 0,
          "overheads must be >= 0");
  require(gpu_memory_bytes > model_weight_bytes,
          "gpu_memory_bytes must exceed model_weight_bytes");
}

namespace {

ModelProfile seven_b(const std::string& name) {
  ModelProfile m;
  m.name = name;
  m.lang_hidden = 4096;
  m.lang_heads = 32;
  m.lang_layers = 32;
  m.vision_hidden = 1024;
  m.vision_heads = 16;
  m.vision_layers = 24;
  return m;
}

}  // namespace

ModelProfile model_preset(const std::string& name) {
  static const std::map<std::string, ModelProfile> presets = {
      {"llava-1.5-7b", seven_b("llava-1.5-7b")},
      {"llava-next-7b", seven_b("llava-next-7b")},
      {"qwen2-vl-7b", seven_b("qwen2-vl-7b")},
  };
  auto it = presets.find(name);
  if (it == presets.end()) {
    throw std::invalid_argument("unknown model preset: " + name);
  }
  return it->second;
}

std::vector<std::string> model_preset_names() {
  return {"llava-1.5-7b", "llava-next-7b", "qwen2-vl-7b"};
}

std::uint64_t op_flops(OpKind op, StageKind stage, std::uint64_t b,
                       std::uint64_t tokens, std::uint64_t h) {
  const bool decode = stage == StageKind::kDecode;
  switch (op) {
    case OpKind::kQkvoProj:
      // Decode is B single-token rows through four HxH matrices: 8BH^2.
      return decode ? 8 * b * h * h : 8 * b * tokens * h * h;
    case OpKind::kFfn:
      return decode ? 16 * b * h * h : 16 * b * tokens * h * h;
    case OpKind::kAttention:
      return decode ? 4 * b * tokens * h : 4 * b * tokens * tokens * h;
  }
  return 0;
}

std::uint64_t op_mem_elems(OpKind op, StageKind stage, std::uint64_t b,
                           std::uint64_t tokens, std::uint64_t h,
                           std::uint64_t m) {
  const bool decode = stage == StageKind::kDecode;
  switch (op) {
    case OpKind::kQkvoProj:
      return decode ? 8 * b * h + 4 * h * h : 8 * b * tokens * h + 4 * h * h;
    case OpKind::kFfn:
      return decode ? 10 * b * h + 8 * h * h : 10 * b * tokens * h + 8 * h * h;
    case OpKind::kAttention:
      return decode ? 4 * b * tokens * m + 2 * b * h * (tokens + 1)
                    : 4 * b * tokens * h + 2 * b * tokens * tokens * m;
  }
  return 0;
}

namespace {

// Weight reads of the two linear rows, in elements per layer.
double weight_elems(double h) { return 12.0 * h * h; }

}  // namespace

StreamWork batch_work(const BatchShape& shape, const ModelProfile& model) {
  StreamWork out;
  const double dtype = static_cast<double>(model.dtype_bytes);

  if (!shape.image_tokens.empty()) {
    const double h = static_cast<double>(model.vision_hidden);
    const double m = static_cast<double>(model.vision_heads);
    double flops = 0.0;
    double elems = weight_elems(h);
    for (std::uint64_t t_int : shape.image_tokens) {
      const double t = static_cast<double>(t_int);
      flops += 8.0 * t * h * h + 16.0 * t * h * h + 4.0 * t * t * h;
      elems += 8.0 * t * h + 10.0 * t * h + 4.0 * t * h + 2.0 * t * t * m;
    }
    const double layers = static_cast<double>(model.vision_layers);
    out.vision.flops = flops * layers;
    out.vision.bytes = elems * dtype * layers;
  }

  if (!shape.prefill_chunks.empty() || !shape.decode_contexts.empty()) {
    const double h = static_cast<double>(model.lang_hidden);
    const double m = static_cast<double>(model.lang_heads);
    double flops = 0.0;
    double elems = weight_elems(h);
    for (std::uint64_t s_int : shape.prefill_chunks) {
      const double s = static_cast<double>(s_int);
      flops += 8.0 * s * h * h + 16.0 * s * h * h + 4.0 * s * s * h;
      elems += 8.0 * s * h + 10.0 * s * h + 4.0 * s * h + 2.0 * s * s * m;
    }
    const double b = static_cast<double>(shape.decode_contexts.size());
    flops += 8.0 * b * h * h + 16.0 * b * h * h;
    elems += 8.0 * b * h + 10.0 * b * h;
    for (std::uint64_t s_int : shape.decode_contexts) {
      const double s = static_cast<double>(s_int);
      flops += 4.0 * s * h;
      // 2H(S+1) is the K/V read; GQA shrinks it by the KV-head fraction.
      elems += 4.0 * s * m + 2.0 * h * (s + 1.0) * model.kv_head_ratio;
    }
    const double layers = static_cast<double>(model.lang_layers);
    out.language.flops = flops * layers;
    out.language.bytes = elems * dtype * layers;
  }
  return out;
}

StreamWork batch_work(std::uint64_t images, std::uint64_t tokens_per_image,
                      std::span<const std::uint64_t> prefill_chunks,
                      std::span<const std::uint64_t> decode_contexts,
                      const ModelProfile& model) {
  BatchShape shape;
  shape.image_tokens.assign(images, tokens_per_image);
  shape.prefill_chunks.assign(prefill_chunks.begin(), prefill_chunks.end());
  shape.decode_contexts.assign(decode_contexts.begin(), decode_contexts.end());
  return batch_work(shape, model);
}

double arithmetic_intensity(const WorkVector& work) {
  if (work.bytes <= 0.0) {
    throw UndefinedIntensity("arithmetic intensity undefined for zero bytes");
  }
  return work.flops / work.bytes;
}

double roofline_latency(const WorkVector& work, const HardwareProfile& hw) {
  return std::max(work.flops / hw.peak_flops, work.bytes / hw.mem_bandwidth) +
         hw.batch_fixed_overhead;
}

double dual_stream_latency(const WorkVector& vision, const WorkVector& language,
                           const HardwareProfile& hw) {
  return roofline_latency(vision + language, hw);
}

double sequential_latency(const WorkVector& vision, const WorkVector& language,
                          const HardwareProfile& hw) {
  if (vision.empty()) return roofline_latency(language, hw);
  if (language.empty()) return roofline_latency(vision, hw);
  return roofline_latency(vision, hw) + roofline_latency(language, hw);
}

std::uint64_t blocks_for(std::uint64_t tokens, std::uint64_t block_tokens) {
  return (tokens + block_tokens - 1) / block_tokens;
}

double kv_bytes_per_token(const ModelProfile& model) {
  return 2.0 * static_cast<double>(model.lang_hidden) *
         static_cast<double>(model.lang_layers) * model.kv_head_ratio *
         static_cast<double>(model.dtype_bytes);
}

double kv_cache_bytes(std::uint64_t tokens, const ModelProfile& model) {
  return static_cast<double>(tokens) * kv_bytes_per_token(model);
}

double image_bytes_per_token(const ModelProfile& model) {
  return static_cast<double>(model.lang_hidden) *
         static_cast<double>(model.dtype_bytes);
}

double image_cache_bytes(std::uint64_t visual_tokens,
                         const ModelProfile& model) {
  return static_cast<double>(visual_tokens) * image_bytes_per_token(model);
}

}  // namespace epdsim
