// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "qroute/nn.hpp"

namespace qroute {

/// Token table backed by a plain text file, one token per line; the
/// line number is the id. Id 0 is the padding token and is reserved:
/// it never carries question content.
class Vocab {
public:
  static constexpr const char* kPad = "<pad>";

  /// First token must be the padding token; duplicates are rejected.
  static Vocab from_tokens(std::vector<std::string> tokens);
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }
  const std::string& token(std::int64_t id) const;
  /// Id for a known token; throws ConfigError naming unknown tokens.
  std::int64_t id(const std::string& token) const;
  bool contains(const std::string& token) const;

  /// Whitespace-tokenizes and encodes. Unknown words throw.
  std::vector<std::int64_t> encode(const std::string& text) const;

private:
  std::vector<std::string> tokens_;
};

/// Question encoder: token embedding followed by a GRU scanned left to
/// right. Sequences are right-padded with id 0 inside the batch; the
/// recurrent state is frozen on padded steps, so each row's encoding
/// equals the encoding of its unpadded sequence exactly and padding
/// receives no gradient.
class TextEncoder {
public:
  TextEncoder(ParamRegistry& reg, const std::string& prefix,
              std::int64_t vocab_size, std::int64_t embed_dim,
              std::int64_t hidden, RngStream& rng);

  /// Pads a ragged id batch to [N, T_max] with zeros.
  static std::vector<std::vector<std::int64_t>> pad_batch(
      const std::vector<std::vector<std::int64_t>>& qs);

  /// Embeds padded token ids: [N, T] -> [N, T, embed_dim].
  Tensor embed_tokens(const std::vector<std::vector<std::int64_t>>& padded) const;

  /// Encodes a ragged batch of token id sequences to [N, hidden].
  Tensor encode(const std::vector<std::vector<std::int64_t>>& qs) const;

  std::int64_t hidden_size() const { return gru_.hidden_size(); }

private:
  Embedding embed_;
  GruCell gru_;
};

}  // namespace qroute
