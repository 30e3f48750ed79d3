// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>

#include "gradcheck.hpp"
#include "qroute/errors.hpp"
#include "qroute/text_encoder.hpp"

using namespace qroute;
using qroute::test::gradcheck_max_rel;

namespace {
Vocab tiny_vocab() {
  return Vocab::from_tokens(
      {"<pad>", "how", "many", "red", "things", "are", "there"});
}
}  // namespace

TEST_CASE("vocab: ids are line numbers, pad is id 0") {
  Vocab v = tiny_vocab();
  CHECK(v.size() == 7);
  CHECK(v.id("<pad>") == 0);
  CHECK(v.id("red") == 3);
  CHECK(v.token(6) == "there");
  CHECK(v.contains("many"));
  CHECK_FALSE(v.contains("blue"));
  auto ids = v.encode("how many red things are there");
  CHECK(ids == std::vector<std::int64_t>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("vocab: unknown tokens and malformed tables are rejected") {
  Vocab v = tiny_vocab();
  CHECK_THROWS_WITH_AS(v.encode("how many blue things"),
                       "token 'blue' is not in the vocabulary", ConfigError);
  CHECK_THROWS_AS(Vocab::from_tokens({"how", "<pad>"}), ConfigError);
  CHECK_THROWS_AS(Vocab::from_tokens({"<pad>", "a", "a"}), ConfigError);
  CHECK_THROWS_AS(Vocab::from_tokens({"<pad>", ""}), ConfigError);
}

TEST_CASE("vocab: file round-trip") {
  const std::string path = "/tmp/qroute_test_vocab.txt";
  Vocab v = tiny_vocab();
  v.save(path);
  Vocab back = Vocab::load(path);
  CHECK(back.size() == v.size());
  for (std::int64_t i = 0; i < v.size(); ++i)
    CHECK(back.token(i) == v.token(i));
  std::remove(path.c_str());
}

TEST_CASE("text encoder: padding leaves encodings unchanged") {
  ParamRegistry reg;
  RngStream rng(20, "enc");
  TextEncoder enc(reg, "text", 7, 5, 6, rng);
  std::vector<std::vector<std::int64_t>> batch{
      {1, 2, 3, 4, 5, 6}, {3, 4}, {2}};
  Tensor all = enc.encode(batch);
  CHECK(all.shape() == Shape{3, 6});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor solo = enc.encode({batch[i]});
    for (std::int64_t j = 0; j < 6; ++j)
      CHECK(solo.at({0, j}) ==
            doctest::Approx(all.at({static_cast<std::int64_t>(i), j}))
                .epsilon(1e-12));
  }
}

TEST_CASE("text encoder: the padding embedding row receives no gradient") {
  ParamRegistry reg;
  RngStream rng(21, "encg");
  TextEncoder enc(reg, "text", 7, 4, 5, rng);
  std::vector<std::vector<std::int64_t>> batch{{1, 2, 3}, {4}};
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(square(enc.encode(batch))));
  }
  Tensor table = reg.find("text.embedding.weight");
  // Row 0 (padding) untouched; row 1 (a real token) trained.
  double pad_norm = 0.0, tok_norm = 0.0;
  for (std::int64_t j = 0; j < 4; ++j) {
    pad_norm += std::fabs(table.grad()[static_cast<std::size_t>(j)]);
    tok_norm += std::fabs(table.grad()[static_cast<std::size_t>(4 + j)]);
  }
  CHECK(pad_norm == 0.0);
  CHECK(tok_norm > 0.0);
}

TEST_CASE("text encoder: explicit pad ids inside a question are rejected") {
  ParamRegistry reg;
  RngStream rng(22, "encp");
  TextEncoder enc(reg, "text", 7, 4, 5, rng);
  CHECK_THROWS_AS(enc.encode({{1, 0, 2}}), ConfigError);
}

TEST_CASE("gradcheck: text encoder end to end") {
  RngStream rng(23, "gc-enc");
  ParamRegistry reg;
  TextEncoder enc(reg, "text", 5, 3, 4, rng);
  std::vector<std::vector<std::int64_t>> batch{{1, 2}, {3, 4, 1}};
  std::vector<Tensor> in;
  for (const auto& p : reg.params()) in.push_back(p.tensor);
  double err = gradcheck_max_rel(
      [&](std::vector<Tensor>&) { return sum(square(enc.encode(batch))); },
      in, rng);
  CHECK(err <= 1e-4);
}
