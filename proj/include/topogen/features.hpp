#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "topogen/numerics.hpp"

namespace topogen {

inline constexpr std::size_t kQueryEmbeddingDim = 384;

struct QueryRecord {
  std::string id;
  std::string text;
  std::optional<std::string> gold;
};

// JSONL, one {"id","query","gold"} object per line. Ids must be unique.
std::vector<QueryRecord> load_queries(const std::string& path);
std::vector<QueryRecord> parse_queries(std::string_view jsonl);

// Maps text to a fixed-width vector. Implementations must be safe to call
// concurrently.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
};

// Signed feature hashing of word unigrams, word bigrams and character
// trigrams into `dimension` buckets, L2-normalized. FNV-1a over the UTF-8
// bytes makes the output identical across runs and platforms.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dimension = kQueryEmbeddingDim) : dim_(dimension) {}
  std::vector<double> embed(std::string_view text) const override;
  std::size_t dimension() const override { return dim_; }

 private:
  std::size_t dim_;
};

std::uint64_t fnv1a64(std::string_view bytes);

// Parameter names owned by this module.
namespace feature_params {
inline constexpr const char* kRoleEmbeddings = "features.role_embeddings";   // [num_roles, d]
inline constexpr const char* kQueryProjection = "features.query_projection"; // [d, d_q]
}  // namespace feature_params

void add_feature_params(ParamStore& store, std::size_t num_roles, std::size_t d, std::size_t d_q);

// Row i = role_embeddings[roles[i]] + query_projection * q_emb.
Matrix init_node_features(std::span<const std::size_t> roles, std::span<const double> q_emb,
                          const ParamStore& params);

// Backward of init_node_features: accumulates dL/dh0 into both arrays.
void init_node_features_backward(std::span<const std::size_t> roles, std::span<const double> q_emb,
                                 const Matrix& d_h0, ParamStore& params);

}  // namespace topogen
