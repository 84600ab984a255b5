#pragma once

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <future>
#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "r3/embedding.hpp"
#include "r3/error.hpp"
#include "r3/http_util.hpp"

namespace r3 {

/// Client for the /v1/embed bridge protocol:
///   POST {endpoint}/v1/embed {"texts": [...]} -> {"dim": N, "vectors": [[...], ...]}
/// Inputs are split into batches of `max_batch`; up to `parallelism` batches
/// are in flight at once.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbedderDescriptor desc)
      : desc_(std::move(desc)), endpoint_(http::Endpoint::parse(desc_.endpoint.value_or(""))) {
    desc_.validate();
  }

  std::size_t dim() const override { return desc_.dim; }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out(texts.size());
    if (texts.empty()) return out;
    const std::size_t n_batches = (texts.size() + desc_.max_batch - 1) / desc_.max_batch;

    for (std::size_t wave = 0; wave < n_batches; wave += desc_.parallelism) {
      const std::size_t wave_end = std::min(n_batches, wave + desc_.parallelism);
      std::vector<std::future<std::vector<EmbeddingVector>>> inflight;
      for (std::size_t b = wave; b < wave_end; ++b) {
        const std::size_t lo = b * desc_.max_batch;
        const std::size_t hi = std::min(texts.size(), lo + desc_.max_batch);
        inflight.push_back(std::async(std::launch::async, [this, texts, lo, hi, b] {
          return embed_batch(texts.subspan(lo, hi - lo), b);
        }));
      }
      for (std::size_t k = 0; k < inflight.size(); ++k) {
        auto vecs = inflight[k].get();
        const std::size_t lo = (wave + k) * desc_.max_batch;
        for (std::size_t i = 0; i < vecs.size(); ++i) out[lo + i] = std::move(vecs[i]);
      }
    }
    return out;
  }

 private:
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts,
                                           std::size_t batch_index) const {
    const std::string where =
        " (endpoint " + endpoint_.original + ", batch " + std::to_string(batch_index) + ")";
    nlohmann::json body = {{"texts", nlohmann::json::array()}};
    for (const auto& t : texts) body["texts"].push_back(t);

    auto client = endpoint_.client(desc_.timeout_seconds);
    auto res = client->Post(endpoint_.path("/v1/embed"), body.dump(), "application/json");
    if (!res) {
      throw Error(ErrorCode::kTransport,
                  "embed request failed: " + httplib::to_string(res.error()) + where, true);
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kTransport,
                  "embed request returned HTTP " + std::to_string(res->status) + where,
                  res->status >= 500);
    }

    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kBadResponse, std::string("embed response is not JSON: ") + e.what() + where);
    }
    if (!parsed.contains("dim") || !parsed.contains("vectors") || !parsed["vectors"].is_array())
      throw Error(ErrorCode::kBadResponse, "embed response missing dim/vectors" + where);
    const auto dim = parsed["dim"].get<std::size_t>();
    if (dim != desc_.dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "remote embedder dim " + std::to_string(dim) + " != configured " +
                      std::to_string(desc_.dim) + where);
    }
    const auto& vectors = parsed["vectors"];
    if (vectors.size() != texts.size()) {
      throw Error(ErrorCode::kBadResponse,
                  "embed response has " + std::to_string(vectors.size()) + " vectors for " +
                      std::to_string(texts.size()) + " texts" + where);
    }
    std::vector<EmbeddingVector> out;
    out.reserve(vectors.size());
    for (const auto& v : vectors) {
      if (!v.is_array() || v.size() != dim)
        throw Error(ErrorCode::kDimensionMismatch, "vector length differs from dim" + where);
      EmbeddingVector ev;
      ev.values.reserve(dim);
      for (const auto& x : v) {
        const auto f = x.get<double>();
        if (!std::isfinite(f)) throw Error(ErrorCode::kBadResponse, "non-finite vector entry" + where);
        ev.values.push_back(static_cast<float>(f));
      }
      out.push_back(std::move(ev));
    }
    return out;
  }

  EmbedderDescriptor desc_;
  http::Endpoint endpoint_;
};

inline std::shared_ptr<const Embedder> make_embedder(const EmbedderDescriptor& desc) {
  desc.validate();
  if (desc.kind == EmbedderKind::kRemote) return std::make_shared<RemoteEmbedder>(desc);
  return std::make_shared<HashedEmbedder>(desc.dim, desc.normalize);
}

}  // namespace r3
