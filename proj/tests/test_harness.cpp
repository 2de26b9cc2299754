#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ladder/checkpoint.hpp"
#include "ladder/dataset.hpp"
#include "ladder/errors.hpp"
#include "ladder/keyvalue.hpp"
#include "ladder/model.hpp"
#include "ladder/train.hpp"

using namespace ladder;

namespace {

/// Unique scratch path under the build tree, removed on destruction.
struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path((std::filesystem::temp_directory_path() / name).string()) {
    std::remove(path.c_str());
  }
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

bool same_bits(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    return false;
  }
  const auto da = a.data();
  const auto db = b.data();
  return std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) == 0;
}

LadderConfig odd_config() {
  LadderConfig cfg;
  cfg.base_dim = 3;
  cfg.lifted_dim = 5;
  cfg.n_experts = 3;
  cfg.top_k = 2;
  cfg.cot_steps = 2;
  cfg.n_heads = 2;
  cfg.n_anchors = 2;
  cfg.activation = Activation::tanh;
  cfg.use_cot = true;
  cfg.use_moe = true;
  cfg.use_dimmap = true;
  cfg.lambda_drift = 0.375;
  cfg.lambda_balance = 0.0625;
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST_CASE("extract_keywords: hand-traced ranking rule") {
  CHECK(extract_keywords("The cola, the COLA!", {"the"}, 1) ==
        std::vector<std::string>{"cola"});
  CHECK(extract_keywords("", {}, 3).empty());
  CHECK(extract_keywords("...!?  \t", {}, 2).empty());
  CHECK(extract_keywords("the THE The", {"the"}, 4).empty());

  // no stopwords, m >= token count: every token, frequency desc then first
  // occurrence — "b" appears twice, "a" and "c" tie and keep text order
  CHECK(extract_keywords("a b c b", {}, 10) == std::vector<std::string>{"b", "a", "c"});
  // equal frequencies resolve purely by first occurrence
  CHECK(extract_keywords("zeta alpha mid zeta alpha mid", {}, 3) ==
        std::vector<std::string>{"zeta", "alpha", "mid"});
  // punctuation splits, case folds, digits are token material
  CHECK(extract_keywords("Top-10, top-10; TOP!", {}, 2) ==
        std::vector<std::string>{"top", "10"});

  CHECK(extract_keywords("one two two three three three", {}, 2) ==
        std::vector<std::string>{"three", "two"});
  CHECK_THROWS_AS(extract_keywords("a b", {}, 0), ContractError);
}

TEST_CASE("gen_toy_dataset: determinism, structure, and validation") {
  const Dataset a = gen_toy_dataset("keyword-class", 50, 9);
  const Dataset b = gen_toy_dataset("keyword-class", 50, 9);
  CHECK(a.samples == b.samples);
  CHECK(a.vocab == b.vocab);
  CHECK(a.labels == b.labels);
  CHECK(a.train_indices == b.train_indices);
  CHECK(a.heldout_indices == b.heldout_indices);
  CHECK_NOTHROW(a.validate());

  const Dataset c = gen_toy_dataset("keyword-class", 50, 10);
  CHECK(a.samples != c.samples);

  CHECK(a.samples.size() == 50);
  CHECK(a.heldout_indices.size() == 10);  // 20% held out
  CHECK(a.train_indices.size() == 40);
  CHECK(a.labels.size() == 4);

  // vocab indices are lexicographic over the tokens
  std::string prev;
  for (const std::string& token : index_ordered(a.vocab)) {
    CHECK(prev < token);
    prev = token;
  }

  CHECK_THROWS_AS(gen_toy_dataset("keyword-class", 9, 1), ConfigError);
  CHECK_THROWS_AS(gen_toy_dataset("word-salad", 50, 1), ConfigError);
  ToyOptions bad;
  bad.overlap = 6;  // == signature_size
  CHECK_THROWS_AS(gen_toy_dataset("keyword-class", 50, 1, bad), ContractError);
  ToyOptions bad_noise;
  bad_noise.noise = 1.5;
  CHECK_THROWS_AS(gen_toy_dataset("keyword-class", 50, 1, bad_noise), ContractError);
}

TEST_CASE("gen_toy_dataset: zero noise keeps every token inside the class signature") {
  ToyOptions opt;
  opt.noise = 0.0;
  const Dataset ds = gen_toy_dataset("keyword-class", 60, 4, opt);
  // signature c covers keyword indices [c*6, c*6+6) of a 24-keyword universe
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const std::size_t c = i % 4;
    for (const std::string& token : ds.samples[i].input) {
      REQUIRE(token.size() == 5);
      REQUIRE(token.substr(0, 2) == "kw");
      const std::size_t kw = std::stoul(token.substr(2));
      CHECK(kw >= c * 6);
      CHECK(kw < c * 6 + 6);
    }
    CHECK(ds.samples[i].target == std::vector<std::string>{"class00" + std::to_string(c)});
  }
  // no filler tokens anywhere, so the vocab is exactly the 24 keywords
  CHECK(ds.vocab.size() == 24);
}

TEST_CASE("gen_toy_dataset: overlapping signatures share keywords across adjacent classes") {
  ToyOptions opt;
  opt.noise = 0.0;
  opt.overlap = 2;
  const Dataset ds = gen_toy_dataset("keyword-class", 80, 4, opt);
  // stride 4 with signature 6: universe has 16 keywords instead of 24
  CHECK(ds.vocab.size() <= 16);
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("char-continuation: sampled transition frequencies match the exposed matrix") {
  const auto transitions = char_grammar_transitions();
  const auto symbols = char_grammar_symbols();
  for (const auto& row : transitions) {
    double sum = 0.0;
    for (double p : row) {
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  std::map<std::string, std::size_t> sym_index;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    sym_index[symbols[i]] = i;
  }

  const Dataset ds = gen_toy_dataset("char-continuation", 6000, 123);
  CHECK_NOTHROW(ds.validate());
  CHECK(ds.labels.size() == 5);

  std::array<std::array<double, 5>, 5> counts{};
  std::size_t total = 0;
  for (const Sample& s : ds.samples) {
    REQUIRE(s.target.size() == 1);
    std::vector<std::size_t> chain;
    for (const std::string& t : s.input) {
      chain.push_back(sym_index.at(t));
    }
    chain.push_back(sym_index.at(s.target[0]));
    for (std::size_t t = 0; t + 1 < chain.size(); ++t) {
      counts[chain[t]][chain[t + 1]] += 1.0;
      ++total;
    }
  }
  CHECK(total >= 10000);

  for (std::size_t i = 0; i < 5; ++i) {
    double row_total = 0.0;
    for (double c : counts[i]) {
      row_total += c;
    }
    REQUIRE(row_total > 0.0);
    for (std::size_t j = 0; j < 5; ++j) {
      const double freq = counts[i][j] / row_total;
      CAPTURE(i);
      CAPTURE(j);
      CHECK(std::abs(freq - transitions[i][j]) < 0.02);
    }
  }
}

TEST_CASE("dataset TSV: round trip and malformed-line diagnostics") {
  const Dataset ds = gen_toy_dataset("keyword-class", 30, 2);
  TempFile file("harness_roundtrip.tsv");
  save_dataset(ds, file.path);
  const Dataset back = load_dataset(file.path, 2);
  CHECK(back.samples == ds.samples);
  CHECK(back.vocab == ds.vocab);
  CHECK(back.labels == ds.labels);
  CHECK_NOTHROW(back.validate());

  // same split seed -> same split; different seed -> (almost surely) not
  const Dataset again = load_dataset(file.path, 2);
  CHECK(again.train_indices == back.train_indices);
  CHECK(again.heldout_indices == back.heldout_indices);

  TempFile bad("harness_bad.tsv");
  spit(bad.path, "alpha beta\tclass000\nno tab here\n");
  CHECK_THROWS_WITH_AS(load_dataset(bad.path), doctest::Contains(":2"), FormatError);
  spit(bad.path, "alpha\tclass000\n\nbeta\tclass001\n");
  CHECK_THROWS_WITH_AS(load_dataset(bad.path), doctest::Contains("empty line"), FormatError);
  spit(bad.path, "alpha\tbeta\tgamma\n");
  CHECK_THROWS_WITH_AS(load_dataset(bad.path), doctest::Contains("more than one tab"),
                       FormatError);
  spit(bad.path, "\tclass000\n");
  CHECK_THROWS_WITH_AS(load_dataset(bad.path), doctest::Contains("empty input"), FormatError);
  spit(bad.path, "alpha\t   \n");
  CHECK_THROWS_WITH_AS(load_dataset(bad.path), doctest::Contains("empty target"), FormatError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/nowhere.tsv"), FormatError);

  // CRLF endings are tolerated
  spit(bad.path, "alpha beta\tclass000\r\ngamma\tclass001\r\n");
  const Dataset crlf = load_dataset(bad.path);
  REQUIRE(crlf.samples.size() == 2);
  CHECK(crlf.samples[0].input == std::vector<std::string>{"alpha", "beta"});
  CHECK(crlf.samples[1].target == std::vector<std::string>{"class001"});
}

TEST_CASE("index_ordered inverts a dense index map and rejects gaps") {
  const std::map<std::string, std::size_t> good = {{"b", 1}, {"a", 0}, {"c", 2}};
  CHECK(index_ordered(good) == std::vector<std::string>{"a", "b", "c"});
  const std::map<std::string, std::size_t> gappy = {{"a", 0}, {"c", 2}};
  CHECK_THROWS_AS(index_ordered(gappy), ContractError);
}

TEST_CASE("Dataset::validate rejects broken invariants") {
  Dataset ds = gen_toy_dataset("keyword-class", 20, 3);
  CHECK_NOTHROW(ds.validate());

  Dataset overlap = ds;
  overlap.heldout_indices.push_back(overlap.train_indices.front());
  CHECK_THROWS_AS(overlap.validate(), ContractError);

  Dataset missing = ds;
  missing.train_indices.pop_back();
  CHECK_THROWS_AS(missing.validate(), ContractError);

  Dataset alien = ds;
  alien.samples[0].input[0] = "never-indexed";
  CHECK_THROWS_AS(alien.validate(), ContractError);

  Dataset hollow = ds;
  hollow.samples[0].target.clear();
  CHECK_THROWS_AS(hollow.validate(), ContractError);
}

TEST_CASE("key=value parser: comments, trimming, duplicates, and errors") {
  const KeyValueMap map = parse_key_values(
      "# full-line comment\n"
      "\n"
      "alpha = 1\n"
      "  beta=two words  # trailing comment\n"
      "alpha = 3\n"
      "gamma=\n");
  CHECK(map.size() == 3);
  CHECK(map.at("alpha") == "3");  // the later assignment wins
  CHECK(map.at("beta") == "two words");
  CHECK(map.at("gamma").empty());

  CHECK_THROWS_WITH_AS(parse_key_values("ok = 1\nnot a pair\n", "conf"),
                       doctest::Contains("conf:2"), FormatError);
  CHECK_THROWS_WITH_AS(parse_key_values("= headless\n"), doctest::Contains("empty key"),
                       FormatError);
  CHECK_THROWS_AS(parse_key_value_file("/nonexistent/nowhere.cfg"), FormatError);

  CHECK(parse_double(map, "alpha", 0.0) == 3.0);
  CHECK(parse_double(map, "absent", 2.5) == 2.5);
  CHECK(parse_size(map, "alpha", 0) == 3);
  CHECK(parse_u64(map, "alpha", 0) == 3);
  CHECK(parse_string(map, "beta", "") == "two words");
  CHECK_THROWS_WITH_AS(parse_size(map, "beta", 0), doctest::Contains("beta"), FormatError);
  CHECK_THROWS_AS(parse_double(map, "beta", 0.0), FormatError);
  CHECK_THROWS_AS(parse_bool(map, "alpha", false), FormatError);

  const KeyValueMap flags = parse_key_values("quiet = true\nloud = 0\n");
  CHECK(parse_bool(flags, "quiet", false));
  CHECK_FALSE(parse_bool(flags, "loud", true));
  CHECK(parse_bool(flags, "absent", true));
}

TEST_CASE("checkpoint: bit-exact round trip of parameters, config, and inventories") {
  const LadderConfig cfg = odd_config();
  LadderModel model = LadderModel::init(cfg, 7, 3);
  // make the payload carry trained-looking values rather than init noise
  for (auto& [name, tensor] : model.named_parameters()) {
    (void)name;
    Tensor t = tensor;
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] = std::sin(static_cast<double>(i) * 0.7) * 1e3 + 1.0 / 3.0;
    }
  }
  const std::vector<std::string> vocab = {"ant", "bee", "cat", "dog", "eel", "fox", "gnu"};
  const std::vector<std::string> labels = {"lo", "mid", "hi"};

  TempFile file("harness_ckpt.bin");
  save_checkpoint(model, vocab, labels, file.path);
  const CheckpointData back = load_checkpoint(file.path);

  CHECK(back.vocab == vocab);
  CHECK(back.labels == labels);
  const LadderConfig& rc = back.model.config;
  CHECK(rc.base_dim == cfg.base_dim);
  CHECK(rc.lifted_dim == cfg.lifted_dim);
  CHECK(rc.n_experts == cfg.n_experts);
  CHECK(rc.top_k == cfg.top_k);
  CHECK(rc.cot_steps == cfg.cot_steps);
  CHECK(rc.n_heads == cfg.n_heads);
  CHECK(rc.n_anchors == cfg.n_anchors);
  CHECK(rc.activation == cfg.activation);
  CHECK(rc.use_cot == cfg.use_cot);
  CHECK(rc.use_moe == cfg.use_moe);
  CHECK(rc.use_dimmap == cfg.use_dimmap);
  CHECK(rc.lambda_drift == cfg.lambda_drift);
  CHECK(rc.lambda_balance == cfg.lambda_balance);
  CHECK(rc.seed == cfg.seed);

  const auto orig = model.named_parameters();
  const auto restored = back.model.named_parameters();
  REQUIRE(orig.size() == restored.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CAPTURE(orig[i].first);
    CHECK(orig[i].first == restored[i].first);
    CHECK(same_bits(orig[i].second, restored[i].second));
  }

  // saving twice produces byte-identical files
  TempFile second("harness_ckpt2.bin");
  save_checkpoint(model, vocab, labels, second.path);
  CHECK(slurp(file.path) == slurp(second.path));
}

TEST_CASE("checkpoint: restored model computes identical losses") {
  const Dataset ds = gen_toy_dataset("keyword-class", 24, 6);
  LadderConfig cfg = odd_config();
  cfg.base_dim = 4;
  cfg.lifted_dim = 8;
  LadderModel model = LadderModel::init(cfg, ds.vocab.size(), ds.labels.size());

  TempFile file("harness_ckpt_loss.bin");
  save_checkpoint(model, index_ordered(ds.vocab), index_ordered(ds.labels), file.path);
  const CheckpointData back = load_checkpoint(file.path);

  NoGradGuard guard;
  const BatchLosses a = forward_batch(model, ds, ds.heldout_indices, 0.1, 0.01);
  const BatchLosses b = forward_batch(back.model, ds, ds.heldout_indices, 0.1, 0.01);
  CHECK(std::memcmp(&a.total.data()[0], &b.total.data()[0], sizeof(double)) == 0);
}

TEST_CASE("checkpoint: corruption and version mismatches are named failures") {
  LadderModel model = LadderModel::init(odd_config(), 4, 2);
  const std::vector<std::string> vocab = {"a", "b", "c", "d"};
  const std::vector<std::string> labels = {"x", "y"};
  TempFile file("harness_ckpt_bad.bin");
  save_checkpoint(model, vocab, labels, file.path);
  const std::string blob = slurp(file.path);

  // truncated payload names the byte offset
  spit(file.path, blob.substr(0, blob.size() - 5));
  CHECK_THROWS_WITH_AS(load_checkpoint(file.path), doctest::Contains("truncated at byte"),
                       FormatError);
  // truncated header too
  spit(file.path, blob.substr(0, 20));
  CHECK_THROWS_WITH_AS(load_checkpoint(file.path), doctest::Contains("truncated"), FormatError);

  // bad magic
  std::string magic = blob;
  magic[0] = 'X';
  spit(file.path, magic);
  CHECK_THROWS_WITH_AS(load_checkpoint(file.path), doctest::Contains("bad magic"), FormatError);

  // future version
  std::string version = blob;
  version[4] = 99;
  spit(file.path, version);
  CHECK_THROWS_WITH_AS(load_checkpoint(file.path), doctest::Contains("99"), VersionError);

  // trailing garbage
  spit(file.path, blob + "junk");
  CHECK_THROWS_WITH_AS(load_checkpoint(file.path), doctest::Contains("trailing"), FormatError);

  // header shape contradicting the config (same-length digit swap keeps the
  // file structurally intact, so the manifest check itself must fire)
  std::string reshaped = blob;
  const std::size_t pos = reshaped.find("tensor=embedding 4x3");
  REQUIRE(pos != std::string::npos);
  reshaped.replace(pos, 20, "tensor=embedding 3x4");
  spit(file.path, reshaped);
  CHECK_THROWS_WITH_AS(load_checkpoint(file.path), doctest::Contains("embedding"), FormatError);

  // a renamed required header key reads as missing
  std::string renamed = blob;
  const std::size_t kpos = renamed.find("base_dim=");
  REQUIRE(kpos != std::string::npos);
  renamed.replace(kpos, 9, "base_dlm=");
  spit(file.path, renamed);
  CHECK_THROWS_WITH_AS(load_checkpoint(file.path), doctest::Contains("base_dim"), FormatError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.bin"), FormatError);

  // save-side contract checks
  CHECK_THROWS_AS(save_checkpoint(model, {"a", "b"}, labels, file.path), ContractError);
  CHECK_THROWS_AS(
      save_checkpoint(model, {"a", "b c", "d", "e"}, labels, file.path), ContractError);
}
