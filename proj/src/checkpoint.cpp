#include "dcount/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dcount {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::baseline_sum: return "baseline_sum";
    case ModelKind::nms: return "nms";
    case ModelKind::counting: return "counting";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "baseline_sum" || name == "baseline" || name == "sum") return ModelKind::baseline_sum;
  if (name == "nms") return ModelKind::nms;
  if (name == "counting") return ModelKind::counting;
  throw std::invalid_argument("unknown model '" + std::string(name) + "' (expected baseline_sum, nms or counting)");
}

ClassifierHead ClassifierHead::zeros(int classes, int features) {
  ClassifierHead head;
  head.classes = classes;
  head.features = features;
  head.weights.assign(static_cast<std::size_t>(classes) * static_cast<std::size_t>(features), 0.0);
  head.bias.assign(static_cast<std::size_t>(classes), 0.0);
  return head;
}

std::vector<double> ClassifierHead::logits(std::span<const double> feature) const {
  if (feature.size() != static_cast<std::size_t>(features)) {
    throw std::invalid_argument("classifier head expects " + std::to_string(features) + " features");
  }
  std::vector<double> out(bias);
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double* row = weights.data() + c * feature.size();
    for (std::size_t j = 0; j < feature.size(); ++j) out[c] += row[j] * feature[j];
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

void append_reals(std::string& out, std::span<const double> values) {
  char buf[48];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, " %a", v);
    out += buf;
  }
}

std::vector<double> parse_reals(std::istringstream& in, std::size_t expected, const std::string& key) {
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
      throw std::runtime_error("checkpoint: bad number '" + token + "' in " + key);
    }
    values.push_back(v);
  }
  if (values.size() != expected) {
    throw std::runtime_error("checkpoint: " + key + " has " + std::to_string(values.size()) + " values, expected " +
                             std::to_string(expected));
  }
  return values;
}

int parse_int(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("checkpoint: bad integer '" + text + "' for " + key);
  }
}

}  // namespace

std::string format_checkpoint(const Checkpoint& ckpt) {
  std::string out = "# dcount checkpoint\nformat 1\n";
  out += "model " + std::string(to_string(ckpt.model)) + "\n";
  out += "n_boxes " + std::to_string(ckpt.n_boxes) + "\n";
  out += "classes " + std::to_string(ckpt.head.classes) + "\n";
  out += "segments " + std::to_string(ckpt.bank.segments()) + "\n";
  out += std::string("use_confidence ") + (ckpt.use_confidence ? "1" : "0") + "\n";
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(ckpt.config_hash));
  out += std::string("config_hash ") + hash + "\n";
  for (std::size_t k = 0; k < kBankSize; ++k) {
    out += "f" + std::to_string(k + 1);
    append_reals(out, ckpt.bank.at(k).weights());
    out += "\n";
  }
  const auto features = static_cast<std::size_t>(ckpt.head.features);
  for (int c = 0; c < ckpt.head.classes; ++c) {
    out += "head.weight." + std::to_string(c);
    append_reals(out, std::span<const double>(ckpt.head.weights).subspan(static_cast<std::size_t>(c) * features, features));
    out += "\n";
  }
  out += "head.bias";
  append_reals(out, ckpt.head.bias);
  out += "\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  std::map<std::string, std::string> entries;
  std::istringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string rest = space == std::string::npos ? "" : line.substr(space + 1);
    if (!entries.emplace(key, rest).second) throw std::runtime_error("checkpoint: duplicate key '" + key + "'");
  }
  const auto take = [&](const std::string& key) {
    auto it = entries.find(key);
    if (it == entries.end()) throw std::runtime_error("checkpoint: missing key '" + key + "'");
    std::string value = it->second;
    entries.erase(it);
    return value;
  };

  if (take("format") != "1") throw std::runtime_error("checkpoint: unsupported format version");
  Checkpoint ckpt;
  ckpt.model = parse_model_kind(take("model"));
  ckpt.n_boxes = parse_int(take("n_boxes"), "n_boxes");
  const int classes = parse_int(take("classes"), "classes");
  const int segments = parse_int(take("segments"), "segments");
  if (ckpt.n_boxes <= 0 || classes <= 0 || segments <= 0) throw std::runtime_error("checkpoint: sizes must be positive");
  const std::string conf = take("use_confidence");
  if (conf != "0" && conf != "1") throw std::runtime_error("checkpoint: use_confidence must be 0 or 1");
  ckpt.use_confidence = conf == "1";
  const std::string hash = take("config_hash");
  char* end = nullptr;
  ckpt.config_hash = std::strtoull(hash.c_str(), &end, 16);
  if (hash.empty() || *end != '\0') throw std::runtime_error("checkpoint: bad config_hash");

  ckpt.bank = PlinBank(segments);
  for (std::size_t k = 0; k < kBankSize; ++k) {
    const std::string key = "f" + std::to_string(k + 1);
    std::istringstream in(take(key));
    ckpt.bank.at(k).set_weights(parse_reals(in, static_cast<std::size_t>(segments), key));
  }
  const int features = ckpt.n_boxes + 1;
  ckpt.head = ClassifierHead::zeros(classes, features);
  for (int c = 0; c < classes; ++c) {
    const std::string key = "head.weight." + std::to_string(c);
    std::istringstream in(take(key));
    const auto row = parse_reals(in, static_cast<std::size_t>(features), key);
    std::copy(row.begin(), row.end(), ckpt.head.weights.begin() + static_cast<std::ptrdiff_t>(c) * features);
  }
  {
    std::istringstream in(take("head.bias"));
    ckpt.head.bias = parse_reals(in, static_cast<std::size_t>(classes), "head.bias");
  }
  if (!entries.empty()) throw std::runtime_error("checkpoint: unknown key '" + entries.begin()->first + "'");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_checkpoint(ckpt);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_checkpoint(text.str());
}

}  // namespace dcount
