#include "topogen/features.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "topogen/errors.hpp"

namespace topogen {

std::vector<QueryRecord> parse_queries(std::string_view jsonl) {
  std::vector<QueryRecord> out;
  std::set<std::string> ids;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      QueryRecord q;
      q.id = j.at("id").get<std::string>();
      q.text = j.at("query").get<std::string>();
      if (j.contains("gold") && !j["gold"].is_null()) {
        q.gold = j["gold"].is_string() ? j["gold"].get<std::string>() : j["gold"].dump();
      }
      if (q.id.empty()) throw InputError("empty id");
      if (!ids.insert(q.id).second) throw InputError("duplicate id '" + q.id + "'");
      out.push_back(std::move(q));
    } catch (const nlohmann::json::exception& ex) {
      throw InputError("query line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const InputError& ex) {
      throw InputError("query line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<QueryRecord> load_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open queries file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_queries(ss.str());
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (c >= 0x80 || std::isalnum(c)) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace

std::vector<double> HashEmbedder::embed(std::string_view text) const {
  if (text.empty()) throw InputError("cannot embed empty text");
  std::vector<double> v(dim_, 0.0);
  auto add = [&](std::string_view prefix, std::string_view feature, double weight) {
    std::string key(prefix);
    key.append(feature);
    const std::uint64_t h = fnv1a64(key);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % dim_] += sign * weight;
  };

  auto tokens = tokenize(text);
  if (tokens.empty()) tokens.emplace_back(text);  // punctuation-only input
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add("w:", tokens[i], 1.0);
    if (i + 1 < tokens.size()) add("b:", tokens[i] + ' ' + tokens[i + 1], 0.5);
    const std::string padded = "#" + tokens[i] + "#";
    for (std::size_t k = 0; k + 3 <= padded.size(); ++k) add("c:", std::string_view(padded).substr(k, 3), 0.25);
  }

  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    // Every feature cancelled out; fall back to a single bucket.
    v[fnv1a64(text) % dim_] = 1.0;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

void add_feature_params(ParamStore& store, std::size_t num_roles, std::size_t d, std::size_t d_q) {
  store.add(feature_params::kRoleEmbeddings, {num_roles, d});
  store.add(feature_params::kQueryProjection, {d, d_q});
}

Matrix init_node_features(std::span<const std::size_t> roles, std::span<const double> q_emb,
                          const ParamStore& params) {
  const Matrix& role = params.value(feature_params::kRoleEmbeddings);
  const Matrix& proj = params.value(feature_params::kQueryProjection);
  if (q_emb.size() != proj.cols()) {
    throw InputError("query embedding has width " + std::to_string(q_emb.size()) + ", projection expects " +
                     std::to_string(proj.cols()));
  }
  if (role.cols() != proj.rows()) throw InputError("role embedding and projection widths differ");

  std::vector<double> task(proj.rows(), 0.0);
  gemv_acc(proj, q_emb, task);

  Matrix h0(roles.size(), role.cols());
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] >= role.rows()) throw InputError("role index " + std::to_string(roles[i]) + " out of range");
    auto out = h0.row(i);
    const auto e = role.row(roles[i]);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = e[k] + task[k];
  }
  return h0;
}

void init_node_features_backward(std::span<const std::size_t> roles, std::span<const double> q_emb,
                                 const Matrix& d_h0, ParamStore& params) {
  Matrix& g_role = params.grad(feature_params::kRoleEmbeddings);
  Matrix& g_proj = params.grad(feature_params::kQueryProjection);
  std::vector<double> d_task(g_proj.rows(), 0.0);
  for (std::size_t i = 0; i < roles.size(); ++i) {
    const auto g = d_h0.row(i);
    auto dst = g_role.row(roles[i]);
    for (std::size_t k = 0; k < g.size(); ++k) {
      dst[k] += g[k];
      d_task[k] += g[k];
    }
  }
  outer_acc(g_proj, d_task, q_emb);
}

}  // namespace topogen
