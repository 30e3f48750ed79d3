// SPDX-License-Identifier: Apache-2.0
#include "qroute/text_encoder.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "qroute/errors.hpp"

namespace qroute {

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens[0] != kPad)
    throw ConfigError(std::string("vocabulary must start with '") + kPad + "'");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty())
      throw ConfigError("vocabulary line " + std::to_string(i) + " is empty");
    for (std::size_t j = i + 1; j < tokens.size(); ++j)
      if (tokens[i] == tokens[j])
        throw ConfigError("duplicate vocabulary token '" + tokens[i] + "'");
  }
  Vocab v;
  v.tokens_ = std::move(tokens);
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open vocabulary '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write vocabulary '" + path + "'");
  for (const auto& t : tokens_) f << t << "\n";
}

const std::string& Vocab::token(std::int64_t id) const {
  if (id < 0 || id >= size())
    throw ConfigError("vocabulary id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::int64_t Vocab::id(const std::string& token) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i] == token) return static_cast<std::int64_t>(i);
  throw ConfigError("token '" + token + "' is not in the vocabulary");
}

bool Vocab::contains(const std::string& token) const {
  return std::find(tokens_.begin(), tokens_.end(), token) != tokens_.end();
}

std::vector<std::int64_t> Vocab::encode(const std::string& text) const {
  std::istringstream is(text);
  std::vector<std::int64_t> ids;
  std::string word;
  while (is >> word) ids.push_back(id(word));
  return ids;
}

TextEncoder::TextEncoder(ParamRegistry& reg, const std::string& prefix,
                         std::int64_t vocab_size, std::int64_t embed_dim,
                         std::int64_t hidden, RngStream& rng)
    : embed_(reg, prefix + ".embedding", vocab_size, embed_dim, rng),
      gru_(reg, prefix + ".gru", embed_dim, hidden, rng) {}

std::vector<std::vector<std::int64_t>> TextEncoder::pad_batch(
    const std::vector<std::vector<std::int64_t>>& qs) {
  std::size_t t_max = 0;
  for (const auto& q : qs) t_max = std::max(t_max, q.size());
  std::vector<std::vector<std::int64_t>> padded;
  padded.reserve(qs.size());
  for (const auto& q : qs) {
    std::vector<std::int64_t> row = q;
    row.resize(t_max, 0);
    padded.push_back(std::move(row));
  }
  return padded;
}

Tensor TextEncoder::embed_tokens(
    const std::vector<std::vector<std::int64_t>>& padded) const {
  if (padded.empty()) throw ShapeError("embed_tokens: empty batch");
  std::int64_t n = static_cast<std::int64_t>(padded.size());
  std::int64_t t = static_cast<std::int64_t>(padded[0].size());
  std::vector<std::int64_t> flat;
  flat.reserve(static_cast<std::size_t>(n * t));
  for (const auto& row : padded) {
    if (static_cast<std::int64_t>(row.size()) != t)
      throw ShapeError("embed_tokens: ragged batch; pad first");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return embed_.forward(flat, {n, t});
}

Tensor TextEncoder::encode(
    const std::vector<std::vector<std::int64_t>>& qs) const {
  if (qs.empty()) throw ShapeError("encode: empty batch");
  for (const auto& q : qs)
    for (std::int64_t id : q)
      if (id == 0)
        throw ConfigError("question contains the padding id 0");
  auto padded = pad_batch(qs);
  std::int64_t n = static_cast<std::int64_t>(padded.size());
  std::int64_t t = static_cast<std::int64_t>(padded[0].size());
  if (t == 0) throw ShapeError("encode: all sequences empty");
  Tensor emb = embed_tokens(padded);  // [N, T, D]
  Tensor h = Tensor::zeros({n, gru_.hidden_size()});
  for (std::int64_t step = 0; step < t; ++step) {
    Tensor x_t = select(emb, 1, step);  // [N, D]
    Tensor c = gru_.forward(x_t, h);
    // Frozen state on padded steps: h <- m*c + (1-m)*h. The mask is a
    // constant, so padded positions contribute nothing to any gradient.
    Tensor m = Tensor::zeros({n});
    Tensor inv = Tensor::zeros({n});
    for (std::int64_t i = 0; i < n; ++i) {
      bool real = padded[static_cast<std::size_t>(i)][static_cast<std::size_t>(step)] != 0;
      m.data()[static_cast<std::size_t>(i)] = real ? 1.0 : 0.0;
      inv.data()[static_cast<std::size_t>(i)] = real ? 0.0 : 1.0;
    }
    h = add(scale_instances(c, m), scale_instances(h, inv));
  }
  return h;
}

}  // namespace qroute
