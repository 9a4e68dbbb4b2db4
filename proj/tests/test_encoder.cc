#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "test_util.h"
#include "verbknow/checkpoint.h"
#include "verbknow/common.h"
#include "verbknow/encoder.h"
#include "verbknow/verb_training.h"

using namespace verbknow;

namespace {

EncoderConfig SmallConfig(int hidden = 8) {
  EncoderConfig c;
  c.num_layers = 2;
  c.hidden = hidden;
  c.heads = 2;
  c.intermediate = 2 * hidden;
  c.max_len = 16;
  c.init_std = 0.3;
  return c;
}

std::vector<Param*> AllAdapterParams(AdapterStack& stack) {
  std::vector<Param*> out;
  for (auto g : {ParamGroup::kVerbAdapter, ParamGroup::kTaskAdapter}) {
    for (Param* p : stack.Params(g)) out.push_back(p);
  }
  return out;
}

// Scalar GeLU from the error function.
double RefGelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("zero up-projection adapters pass hidden states through") {
  const Encoder enc = Encoder(SmallConfig(), testing::SmallTokenizer());
  const AdapterStack stack = InsertAdapters(enc, AdapterPlacement::kAfterFfn, 2, AdapterInit::kNearZeroUp, 3);
  const std::vector<int> ids = {2, 5, 6, 3};
  const Matrix plain = enc.Forward(ids, {}, nullptr, nullptr);
  const Matrix with = enc.Forward(ids, {}, &stack, nullptr);
  CHECK((plain - with).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("adapter forward matches a hand computation") {
  AdapterParams ap("a", ParamGroup::kVerbAdapter, 0, 4, 2);
  ap.down.weight.value << 1, 0, 0, 1, 1, 1, 0, -1;  // 4 x 2
  ap.down.bias.value << 0.5, -0.5;
  ap.up.weight.value << 1, 2, 3, 4, -1, 0, 1, 0;  // 2 x 4
  ap.up.bias.value << 0, 0, 0, 1;
  Matrix h(1, 4), r(1, 4);
  h << 1, 2, 0, -1;
  r << 10, 20, 30, 40;
  // D h + b = (1 + 0 + 0 + 0 + 0.5, 0 + 2 + 0 + 1 - 0.5) = (1.5, 2.5)
  const double g1 = RefGelu(1.5), g2 = RefGelu(2.5);
  Matrix expected(1, 4);
  expected << g1 - g2 + 10, 2 * g1 + 20, 3 * g1 + g2 + 30, 4 * g1 + 1 + 40;
  const Matrix out = AdapterForward(h, r, ap);
  CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(AdapterForward(Matrix::Zero(1, 3), Matrix::Zero(1, 3), ap), ValidationError);
}

TEST_CASE("adapter parameter counts") {
  const int h = 768, m = 48;
  CHECK(AdapterParams("a", ParamGroup::kVerbAdapter, 0, h, m).ParamCount() == 2 * h * m + m + h);
  CHECK(AdapterParams("a", ParamGroup::kVerbAdapter, 0, h, m).ParamCount() == 74544);

  const Encoder enc = Encoder(SmallConfig(32), testing::SmallTokenizer());
  AdapterStack stack = InsertAdapters(enc, AdapterPlacement::kAfterFfn, 16, AdapterInit::kNearZeroUp, 1);
  CHECK(TrainableAdapterParams(stack, Regime::kFft) == 2 * (2 * 32 * 2 + 2 + 32));
  stack = StackTaskAdapter(stack, enc, 4, 2);
  CHECK(TrainableAdapterParams(stack, Regime::kTa) == 2 * (2 * 32 * 8 + 8 + 32));
  CHECK_THROWS_AS(StackTaskAdapter(stack, enc, 4, 2), ValidationError);
  CHECK_THROWS_AS(InsertAdapters(enc, AdapterPlacement::kAfterFfn, 5, AdapterInit::kNearZeroUp, 1),
                  ValidationError);
}

TEST_CASE("analytic gradients match finite differences") {
  auto tok = std::make_shared<const WordPieceTokenizer>(BuildWordVocabulary({"aa", "bb", "cc", "dd"}));
  Encoder enc = Encoder::TinyDesk(SmallConfig(8), tok, 3);
  AdapterStack stack = InsertAdapters(enc, AdapterPlacement::kAfterFfn, 2, AdapterInit::kRandom, 5, "v", 0.3);
  stack = StackTaskAdapter(stack, enc, 2, 9, 0.3);
  std::mt19937_64 init(4);
  for (auto& l : stack.layers) InitNormal(l.task->up.weight.value, 0.3, init);
  stack.freeze = FreezeFlags{};

  const std::vector<int> ids = {2, 5, 6, 7, 3};
  const std::vector<int> types = {0, 0, 0, 1, 1};
  std::mt19937_64 r(1);
  Matrix weights(5, 8);
  InitNormal(weights, 1.0, r);
  auto loss = [&] { return (enc.Forward(ids, types, &stack, nullptr).array() * weights.array()).sum(); };

  EncoderCache cache;
  enc.Forward(ids, types, &stack, &cache);
  std::vector<Param*> params = enc.Params();
  for (Param* p : AllAdapterParams(stack)) params.push_back(p);
  ZeroGrads(params);
  enc.Backward(cache, weights, &stack, true);

  double worst = 0.0;
  for (Param* p : params) {
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(p->size(), 12); ++i) {
      double& w = p->value.data()[i];
      const double orig = w, eps = 1e-5;
      w = orig + eps;
      const double up = loss();
      w = orig - eps;
      const double down = loss();
      w = orig;
      const double numeric = (up - down) / (2 * eps), analytic = p->grad.data()[i];
      const double scale = std::abs(numeric) + std::abs(analytic);
      if (scale < 1e-7) continue;  // both vanish
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("frozen backward leaves the encoder untouched") {
  Encoder enc = Encoder::TinyDesk(SmallConfig(8), testing::SmallTokenizer(), 3);
  AdapterStack stack = InsertAdapters(enc, AdapterPlacement::kAfterFfn, 2, AdapterInit::kRandom, 5);
  stack = StackTaskAdapter(stack, enc, 2, 9);
  SetFreezing(stack, Regime::kTa);
  const std::string enc_before = SerializeParams(std::as_const(enc).Params());
  const std::string verb_before = SerializeParams(std::as_const(stack).Params(ParamGroup::kVerbAdapter));
  EncoderCache cache;
  const Matrix out = enc.Forward({2, 5, 3}, {}, &stack, &cache);
  for (Param* p : AllAdapterParams(stack)) p->ZeroGrad();
  enc.BackwardFrozen(cache, Matrix::Ones(out.rows(), out.cols()), &stack);
  CHECK(SerializeParams(std::as_const(enc).Params()) == enc_before);
  for (const Param* p : std::as_const(stack).Params(ParamGroup::kVerbAdapter)) CHECK(p->grad.isZero());
  double task_grad = 0;
  for (const Param* p : std::as_const(stack).Params(ParamGroup::kTaskAdapter)) task_grad += p->grad.norm();
  CHECK(task_grad > 0);
  CHECK(SerializeParams(std::as_const(stack).Params(ParamGroup::kVerbAdapter)) == verb_before);
}

TEST_CASE("regime freezing flags") {
  const Encoder enc = Encoder(SmallConfig(8), testing::SmallTokenizer());
  AdapterStack verb = InsertAdapters(enc, AdapterPlacement::kAfterFfn, 2, AdapterInit::kNearZeroUp, 1);
  CHECK_THROWS_AS(SetFreezing(verb, Regime::kTa), ValidationError);
  const FreezeFlags fft = SetFreezing(verb, Regime::kFft);
  CHECK_FALSE(fft.encoder);
  CHECK_FALSE(fft.verb_adapter);
  AdapterStack ta = StackTaskAdapter(verb, enc, 2, 3);
  const FreezeFlags f = SetFreezing(ta, Regime::kTa);
  CHECK(f.encoder);
  CHECK(f.verb_adapter);
  CHECK_FALSE(f.task_adapter);
  CHECK_FALSE(f.heads);
  CHECK(ParseRegime("2TA") == Regime::k2Ta);
  CHECK_THROWS_AS(ParseRegime("lora"), ValidationError);
}

TEST_CASE("tokenizer and pair encoding") {
  const auto tok = testing::SmallTokenizer();
  CHECK(tok->Tokenize("Walked") == std::vector<std::string>{"walk", "##ed"});
  CHECK(tok->Tokenize("zzz") == std::vector<std::string>{"[UNK]"});
  CHECK(tok->Tokenize("the man, died.").size() == 5);
  const EncodedInput e = EncodePair("walk", "march", *tok, 16);
  REQUIRE(e.ids.size() == 5);
  CHECK(e.ids.front() == tok->cls_id());
  CHECK(e.ids[2] == tok->sep_id());
  CHECK(e.ids.back() == tok->sep_id());
  CHECK(e.types == std::vector<int>{0, 0, 0, 1, 1});
  CHECK(EncodePair("walk_run", "march", *tok, 16).ids.size() == 6);
  CHECK_THROWS_AS(EncodePair("", "march", *tok, 16), ValidationError);
  CHECK_THROWS_AS(WordPieceTokenizer({"a", "b"}), ValidationError);
}

TEST_CASE("pair classifier and cross-entropy") {
  const Encoder enc = Encoder::TinyDesk(SmallConfig(8), testing::SmallTokenizer(), 2);
  const AdapterStack stack = InsertAdapters(enc, AdapterPlacement::kAfterFfn, 2, AdapterInit::kNearZeroUp, 1);
  PairClassifier head(8);
  const auto [neg, pos] = ClassifyPair(enc, stack, head, VerbPair("walk", "march"));
  CHECK(neg == doctest::Approx(0.5));
  CHECK(pos == doctest::Approx(0.5));
  Matrix logits(2, 2);
  logits << 0, 0, 1, 3;
  const double expected = 0.5 * (std::log(2.0) + std::log(1 + std::exp(-2.0)));
  CHECK(CrossEntropy(logits, {1, 1}) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("encoder and adapter checkpoints round-trip") {
  testing::TempDir dir;
  const Encoder enc = Encoder::TinyDesk(SmallConfig(8), testing::SmallTokenizer(), 5);
  SaveEncoder(dir.File("enc.ckpt"), enc);
  const Encoder back = LoadEncoder(dir.File("enc.ckpt"));
  CHECK(SerializeParams(back.Params()) == SerializeParams(enc.Params()));
  CHECK(back.tokenizer().vocab() == enc.tokenizer().vocab());

  const AdapterStack stack = InsertAdapters(enc, AdapterPlacement::kAfterFfn, 2, AdapterInit::kRandom, 7);
  AdapterCheckpointInfo info;
  info.resource = "vn";
  info.reduction = 2;
  info.hidden = 8;
  info.layers = 2;
  SaveAdapterCheckpoint(dir.File("a.ckpt"), stack, info);
  AdapterCheckpointInfo read;
  const AdapterStack loaded = LoadAdapterCheckpoint(dir.File("a.ckpt"), enc, &read);
  CHECK(read.resource == "vn");
  CHECK(SerializeParams(loaded.Params(ParamGroup::kVerbAdapter)) ==
        SerializeParams(stack.Params(ParamGroup::kVerbAdapter)));

  const Encoder wide = Encoder(SmallConfig(16), testing::SmallTokenizer());
  CHECK_THROWS_AS(LoadAdapterCheckpoint(dir.File("a.ckpt"), wide), ValidationError);
  testing::WriteFile(dir.File("junk.ckpt"), "not a checkpoint");
  CHECK_THROWS(LoadEncoder(dir.File("junk.ckpt")));
}

TEST_CASE("seeding token embeddings needs hidden minus one dimensions") {
  Encoder enc = Encoder::TinyDesk(SmallConfig(8), testing::SmallTokenizer(), 5);
  EmbeddingSpace bad(8, "en");
  bad.Add("walk", Eigen::VectorXd::Ones(8));
  CHECK_THROWS_AS(SeedTokenEmbeddings(enc, bad), ValidationError);
  EmbeddingSpace good(7, "en");
  good.Add("walk", Eigen::VectorXd::Ones(7));
  SeedTokenEmbeddings(enc, good);
  const RowVector row = enc.token_embeddings.value.row(enc.tokenizer().IdOf("walk"));
  CHECK(row(7) == 0.0);
  CHECK(row.norm() == doctest::Approx(0.3 * std::sqrt(8.0)));
}

TEST_CASE("converted external BERT weights reproduce a reference forward pass") {
  testing::TempDir dir;
  const std::string cmd = std::string("python3 '") + VERBKNOW_SOURCE_DIR + "/tests/bert_reference.py' '" +
                          dir.path() + "' '" + VERBKNOW_SOURCE_DIR + "/tools/convert_bert.py' > /dev/null 2>&1";
  if (std::system("python3 -c 'import numpy, safetensors' > /dev/null 2>&1") != 0) {
    MESSAGE("skipped: python3 with numpy and safetensors not available");
    return;
  }
  REQUIRE(std::system(cmd.c_str()) == 0);
  const Encoder enc = LoadEncoder(dir.File("encoder.ckpt"));
  CHECK(enc.config().flavor == EncoderFlavor::kPretrainedExternal);
  CHECK_FALSE(enc.tokenizer().lowercase());

  std::ifstream in(dir.File("reference.txt"));
  std::string line;
  std::vector<int> ids, types;
  std::getline(in, line);
  for (std::istringstream s(line); s >> line;) ids.push_back(std::stoi(line));
  std::getline(in, line);
  for (std::istringstream s(line); s >> line;) types.push_back(std::stoi(line));
  Matrix expected(static_cast<Eigen::Index>(ids.size()), enc.hidden());
  for (Eigen::Index r = 0; r < expected.rows(); ++r) {
    for (Eigen::Index c = 0; c < expected.cols(); ++c) in >> expected(r, c);
  }
  REQUIRE(in);
  const Matrix got = enc.Forward(ids, types, nullptr, nullptr);
  CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-9);
}

}  // TEST_SUITE
