#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <string>

#include "dcount/checkpoint.hpp"
#include "support.hpp"

using namespace dcount;

namespace {

Checkpoint random_checkpoint(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Checkpoint ck;
  ck.model = ModelKind::counting;
  ck.n_boxes = 10;
  ck.use_confidence = seed % 2 == 0;
  ck.config_hash = rng();
  ck.bank = testing::random_bank(rng, -3.0, 3.0);
  ck.head = ClassifierHead::zeros(11, 11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& w : ck.head.weights) w = g(rng);
  for (double& b : ck.head.bias) b = g(rng);
  return ck;
}

std::string replace_line(std::string text, const std::string& prefix, const std::string& replacement) {
  const auto at = text.find("\n" + prefix);
  REQUIRE(at != std::string::npos);
  const auto end = text.find('\n', at + 1);
  return text.replace(at + 1, end - at - 1, replacement);
}

}  // namespace

TEST_CASE("model names") {
  CHECK(parse_model_kind("counting") == ModelKind::counting);
  CHECK(parse_model_kind("nms") == ModelKind::nms);
  CHECK(parse_model_kind("baseline_sum") == ModelKind::baseline_sum);
  CHECK(parse_model_kind("baseline") == ModelKind::baseline_sum);
  CHECK(parse_model_kind("sum") == ModelKind::baseline_sum);
  CHECK_THROWS_AS(parse_model_kind("lstm"), std::invalid_argument);
  for (ModelKind k : {ModelKind::baseline_sum, ModelKind::nms, ModelKind::counting})
    CHECK(parse_model_kind(to_string(k)) == k);
}

TEST_CASE("write -> read -> write is byte-identical") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Checkpoint ck = random_checkpoint(seed);
    const std::string text = format_checkpoint(ck);
    const Checkpoint back = parse_checkpoint(text);
    CHECK(format_checkpoint(back) == text);
    CHECK(back.bank.flat_weights() == ck.bank.flat_weights());
    CHECK(back.head.weights == ck.head.weights);
    CHECK(back.head.bias == ck.head.bias);
    CHECK(back.config_hash == ck.config_hash);
    CHECK(back.use_confidence == ck.use_confidence);
  }
}

TEST_CASE("extreme values survive the round trip") {
  Checkpoint ck = random_checkpoint(3);
  ck.head.bias[0] = std::numeric_limits<double>::denorm_min();
  ck.head.bias[1] = -0.0;
  ck.head.bias[2] = std::numeric_limits<double>::max();
  ck.head.bias[3] = 0.1;
  const Checkpoint back = parse_checkpoint(format_checkpoint(ck));
  CHECK(back.head.bias[0] == std::numeric_limits<double>::denorm_min());
  CHECK(std::signbit(back.head.bias[1]));
  CHECK(back.head.bias[2] == std::numeric_limits<double>::max());
  CHECK(back.head.bias[3] == 0.1);
}

TEST_CASE("different segment counts and models") {
  Checkpoint ck;
  ck.model = ModelKind::nms;
  ck.n_boxes = 6;
  ck.bank = PlinBank(8);
  ck.head = ClassifierHead::zeros(4, 7);
  const std::string text = format_checkpoint(ck);
  const Checkpoint back = parse_checkpoint(text);
  CHECK(back.model == ModelKind::nms);
  CHECK(back.bank.segments() == 8);
  CHECK(back.head.classes == 4);
  CHECK(back.head.features == 7);
  CHECK(format_checkpoint(back) == text);
}

TEST_CASE("malformed checkpoints are rejected") {
  const std::string good = format_checkpoint(random_checkpoint(5));
  CHECK_NOTHROW(parse_checkpoint(good));
  CHECK_NOTHROW(parse_checkpoint("# comment\n" + good));

  CHECK_THROWS_AS(parse_checkpoint(replace_line(good, "format", "format 2")), std::runtime_error);
  CHECK_THROWS_AS(parse_checkpoint(replace_line(good, "model", "model perceptron")), std::exception);
  CHECK_THROWS_AS(parse_checkpoint(replace_line(good, "f3", "f3 1 2 3")), std::runtime_error);
  CHECK_THROWS_AS(parse_checkpoint(replace_line(good, "head.bias", "head.bias x")), std::runtime_error);
  CHECK_THROWS_AS(parse_checkpoint(replace_line(good, "use_confidence", "use_confidence yes")), std::runtime_error);
  CHECK_THROWS_AS(parse_checkpoint(replace_line(good, "f8", "")), std::runtime_error);          // missing
  CHECK_THROWS_AS(parse_checkpoint(good + "format 1\n"), std::runtime_error);                       // duplicate
  CHECK_THROWS_AS(parse_checkpoint(good + "learning_rate 0.01\n"), std::runtime_error);            // unknown
  CHECK_THROWS_AS(parse_checkpoint(""), std::runtime_error);
}

TEST_CASE("save and load through a file") {
  const auto path = std::filesystem::temp_directory_path() / "dcount_test_checkpoint.txt";
  const Checkpoint ck = random_checkpoint(9);
  save_checkpoint(ck, path);
  CHECK(format_checkpoint(load_checkpoint(path)) == format_checkpoint(ck));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  CHECK_THROWS_AS(save_checkpoint(ck, "/nonexistent-dir/x/ck.txt"), std::runtime_error);
}

TEST_CASE("classifier head") {
  ClassifierHead h = ClassifierHead::zeros(2, 3);
  h.weights = {1, 2, 3, 4, 5, 6};
  h.bias = {0.5, -0.5};
  const auto out = h.logits(std::vector<double>{1, 0, 2});
  CHECK(out == std::vector<double>{7.5, 15.5});
  CHECK_THROWS_AS(h.logits(std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}
