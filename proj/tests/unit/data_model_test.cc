// Copyright 2026 The dsu-tone Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include <doctest.h>

#include "dsu/corpus.h"
#include "dsu/error.h"
#include "dsu/feature_io.h"
#include "dsu/synthetic.h"
#include "test_util.h"

namespace dsu {
namespace {

using testing::ReadFile;
using testing::TempDir;
using testing::WriteFile;

ErrorKind KindOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kIo;
}

std::string RawDsuf(const char magic[4], uint32_t version, uint32_t t,
                    uint32_t d, const std::vector<float>& payload) {
  std::string s(magic, 4);
  for (uint32_t v : {version, t, d}) s.append(reinterpret_cast<const char*>(&v), 4);
  s.append(reinterpret_cast<const char*>(payload.data()), payload.size() * 4);
  return s;
}

FeatureSequence Seq(int t, int d, const std::string& id = "u1") {
  FeatureSequence s;
  s.utterance_id = id;
  s.frames = MatrixF::Zero(t, d);
  return s;
}

TEST_SUITE("data-model") {

TEST_CASE("feature file with T=2, D=3 loads the stored values") {
  TempDir dir("dsuf");
  WriteFile(dir / "a.dsuf", RawDsuf("DSUF", 1, 2, 3, {1, 2, 3, 4, 5, 6}));
  const FeatureSequence s = LoadFeatureFile(dir / "a.dsuf", "a");
  REQUIRE(s.num_frames() == 2);
  REQUIRE(s.dim() == 3);
  CHECK(s.frames(0, 0) == 1.0f);
  CHECK(s.frames(0, 2) == 3.0f);
  CHECK(s.frames(1, 0) == 4.0f);
  CHECK(s.frames(1, 2) == 6.0f);
}

TEST_CASE("feature file errors have distinct kinds") {
  TempDir dir("dsuf_err");
  WriteFile(dir / "magic.dsuf", RawDsuf("XXXX", 1, 1, 1, {1}));
  WriteFile(dir / "version.dsuf", RawDsuf("DSUF", 9, 1, 1, {1}));
  WriteFile(dir / "short.dsuf",
            RawDsuf("DSUF", 1, 10, 2, std::vector<float>(5 * 2, 1.0f)));
  WriteFile(dir / "nan.dsuf",
            RawDsuf("DSUF", 1, 1, 2, {1.0f, std::numeric_limits<float>::quiet_NaN()}));
  WriteFile(dir / "header.dsuf", "DSU");
  CHECK(KindOf([&] { LoadFeatureFile(dir / "missing.dsuf"); }) == ErrorKind::kIo);
  CHECK(KindOf([&] { LoadFeatureFile(dir / "magic.dsuf"); }) == ErrorKind::kFormat);
  CHECK(KindOf([&] { LoadFeatureFile(dir / "version.dsuf"); }) == ErrorKind::kFormat);
  CHECK(KindOf([&] { LoadFeatureFile(dir / "short.dsuf"); }) == ErrorKind::kTruncated);
  CHECK(KindOf([&] { LoadFeatureFile(dir / "nan.dsuf"); }) == ErrorKind::kNonFinite);
  CHECK(KindOf([&] { LoadFeatureFile(dir / "header.dsuf"); }) == ErrorKind::kTruncated);
}

TEST_CASE("save rejects invalid sequences before writing") {
  TempDir dir("dsuf_save");
  FeatureSequence nan = Seq(2, 2);
  nan.frames(1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK(KindOf([&] { SaveFeatureFile(nan, dir / "n.dsuf"); }) == ErrorKind::kNonFinite);
  CHECK_FALSE(std::filesystem::exists(dir / "n.dsuf"));
  CHECK_THROWS_AS(SaveFeatureFile(Seq(0, 3), dir / "e.dsuf"), Error);
  CHECK_FALSE(std::filesystem::exists(dir / "e.dsuf"));
  CHECK(KindOf([&] { SaveFeatureFile(Seq(1, 1), dir / "no" / "such" / "x.dsuf"); }) ==
        ErrorKind::kIo);
}

TEST_CASE("feature round trip is bit exact, including T=1 and D=1") {
  TempDir dir("dsuf_rt");
  Rng rng(3);
  for (auto [t, d] : {std::pair{1, 1}, {1, 7}, {9, 1}, {13, 64}}) {
    FeatureSequence s = Seq(t, d);
    s.frames = testing::RandomMatrix(rng, t, d, 1e3);
    s.frames(0, 0) = std::numeric_limits<float>::denorm_min();
    SaveFeatureFile(s, dir / "x.dsuf");
    const FeatureSequence back = LoadFeatureFile(dir / "x.dsuf", "u1");
    REQUIRE(back.frames.rows() == t);
    CHECK(std::memcmp(back.frames.data(), s.frames.data(), sizeof(float) * t * d) == 0);
  }
}

constexpr char kHeader[] = "utterance_id\tstart_frame\tend_frame\tphone\ttone\tis_vowel\n";

TEST_CASE("well-formed alignments parse into sorted segments") {
  const auto segs = ParseAlignments(std::string(kHeader) +
                                        "u1\t3\t5\tn\tT0\t0\n"
                                        "other\t0\t99\tx\tT0\t0\n"
                                        "u1\t0\t3\ta\tT1\t1\n",
                                    Seq(5, 2), "al.tsv");
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].start_frame == 0);
  CHECK(segs[0].end_frame == 3);
  CHECK(segs[0].phone_label == "a");
  CHECK(segs[0].has_tone());
  CHECK(segs[1].phone_label == "n");
  CHECK_FALSE(segs[1].is_vowel);
  CHECK_FALSE(segs[1].has_tone());
}

TEST_CASE("alignment errors name the offending line") {
  auto message = [](const std::string& body, ErrorKind want) {
    try {
      ParseAlignments(std::string(kHeader) + body, Seq(5, 2), "al.tsv");
    } catch (const Error& e) {
      CHECK(e.kind() == want);
      return std::string(e.what());
    }
    FAIL("expected an error");
    return std::string();
  };
  CHECK(message("u1\t0\t3\ta\tT1\t1\nu1\t2\t5\tb\tT2\t1\n", ErrorKind::kOverlap)
            .find("al.tsv:3") != std::string::npos);
  CHECK(message("u1\t0\t9\ta\tT1\t1\n", ErrorKind::kRange).find("al.tsv:2") !=
        std::string::npos);
  CHECK(message("u1\t0\t2\ta\tT1\t1\nu1\tzero\t3\ta\tT1\t1\n", ErrorKind::kFormat)
            .find("al.tsv:3") != std::string::npos);
  CHECK(message("u1\t0\t2\ta\tT1\n", ErrorKind::kFormat).find("al.tsv:2") !=
        std::string::npos);
  CHECK(message("u1\t3\t3\ta\tT1\t1\n", ErrorKind::kRange).find("al.tsv:2") !=
        std::string::npos);
  CHECK_THROWS_AS(ParseAlignments("bad header\n", Seq(5, 2), "x"), Error);
}

TEST_CASE("alignment save and load round trip") {
  TempDir dir("align");
  const FeatureSequence s = Seq(6, 1);
  std::vector<PhoneSegment> segs{{"u1", 0, 2, "p", "T0", false},
                                 {"u1", 2, 6, "a", "T3", true}};
  SaveAlignments(segs, dir / "a.tsv");
  CHECK(LoadAlignments(dir / "a.tsv", s) == segs);
}

Corpus ThreeSegmentCorpus(bool vowels) {
  Corpus c;
  c.feature_dim = 2;
  Utterance u;
  u.features = Seq(6, 2);
  for (int t = 0; t < 6; ++t) u.features.frames.row(t).setConstant(static_cast<float>(t));
  u.segments = {{"u1", 0, 2, "a", "T1", vowels},
                {"u1", 2, 3, "k", "T0", false},
                {"u1", 3, 6, "e", "T2", vowels}};
  c.utterances.push_back(u);
  return c;
}

TEST_CASE("vowel extraction filters by the vowel flag in order") {
  const Corpus c = ThreeSegmentCorpus(true);
  const auto v = ExtractVowelSegments(c);
  REQUIRE(v.size() == 2);
  CHECK(v[0].segment().phone_label == "a");
  CHECK(v[1].segment().phone_label == "e");
  CHECK(v[1].frames().rows() == 3);
  CHECK(v[1].frames()(0, 0) == 3.0f);
  CHECK(ExtractVowelSegments(ThreeSegmentCorpus(false)).empty());
}

TEST_CASE("mean pooling") {
  MatrixF one(1, 3);
  one << 1, 2, 3;
  CHECK(MeanPoolSegment(one).isApprox(one.row(0)));
  MatrixF two(2, 2);
  two << 0, 0, 2, 4;
  const RowVectorF m = MeanPoolSegment(two);
  CHECK(m(0) == 1.0f);
  CHECK(m(1) == 2.0f);
  CHECK(KindOf([] { MeanPoolSegment(MatrixF(0, 3)); }) == ErrorKind::kDegenerate);

  // Oracle: reverse-order summation in long double.
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixF block = testing::RandomMatrix(rng, 5, 8, 3.0);
    const RowVectorF got = MeanPoolSegment(block);
    for (int c = 0; c < 8; ++c) {
      long double sum = 0;
      for (int r = 4; r >= 0; --r) sum += block(r, c);
      const double want = static_cast<double>(sum / 5);
      CHECK(std::abs(got(c) - want) <= 1e-6 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("split filtering") {
  CorpusManifest m;
  const Split splits[10] = {Split::kTrain, Split::kTrain, Split::kValidation,
                            Split::kTrain, Split::kTest, Split::kTrain,
                            Split::kTrain, Split::kValidation, Split::kTest,
                            Split::kTrain};
  for (int i = 0; i < 10; ++i) {
    m.entries.push_back({"u" + std::to_string(i), "f", "a", splits[i]});
  }
  const CorpusManifest train = SplitDataset(m, Split::kTrain);
  REQUIRE(train.entries.size() == 6);
  CHECK(train.entries[2].utterance_id == "u3");
  CHECK(SplitDataset(m, "validation").entries.size() == 2);
  CHECK(SplitDataset(train, Split::kTrain).entries.size() == 6);
  CHECK(KindOf([&] { SplitDataset(m, "dev"); }) == ErrorKind::kInvalidArgument);
}

TEST_CASE("manifest validation") {
  TempDir dir("manifest");
  WriteFile(dir / "f.dsuf", "");
  WriteFile(dir / "a.tsv", "");
  WriteFile(dir / "dup.json",
            R"([{"id":"x","features":"f.dsuf","alignments":"a.tsv","split":"train"},
                {"id":"x","features":"f.dsuf","alignments":"a.tsv","split":"test"}])");
  WriteFile(dir / "missing.json",
            R"([{"id":"x","features":"nope.dsuf","alignments":"a.tsv","split":"train"}])");
  WriteFile(dir / "dev.json",
            R"([{"id":"x","features":"f.dsuf","alignments":"a.tsv","split":"dev"}])");
  WriteFile(dir / "obj.json", R"({"id":"x"})");
  CHECK(KindOf([&] { LoadManifest(dir / "dup.json"); }) == ErrorKind::kFormat);
  CHECK(KindOf([&] { LoadManifest(dir / "missing.json"); }) == ErrorKind::kIo);
  CHECK(KindOf([&] { LoadManifest(dir / "dev.json"); }) == ErrorKind::kInvalidArgument);
  CHECK(KindOf([&] { LoadManifest(dir / "obj.json"); }) == ErrorKind::kFormat);
  CHECK(KindOf([&] { LoadManifest(dir / "none.json"); }) == ErrorKind::kIo);
}

TEST_CASE("synthetic corpus: determinism on disk and load round trip") {
  TempDir a("synth_a"), b("synth_b");
  SyntheticSpec spec = testing::SmallSpec();
  spec.num_utterances = {8, 3, 3};
  SyntheticGroundTruth truth;
  const auto ma = GenerateSyntheticCorpus(spec, a.path(), &truth);
  const auto mb = GenerateSyntheticCorpus(spec, b.path());
  CHECK(ReadFile(ma) == ReadFile(mb));
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a.path());
    CHECK(ReadFile(e.path()) == ReadFile(b.path() / rel));
  }
  const Corpus c = LoadCorpus(LoadManifest(ma));
  CHECK(HasAllSplits(c));
  CHECK(c.feature_dim == spec.dim);
  int vowels = 0;
  for (int s = 0; s < 3; ++s) vowels += truth.vowel_segments[s];
  CHECK(static_cast<int>(ExtractVowelSegments(c).size()) == vowels);
  const SyntheticCorpus mem = GenerateSyntheticInMemory(spec);
  REQUIRE(mem.corpus.utterances.size() == c.utterances.size());
  CHECK(mem.corpus.utterances[3].features.frames ==
        c.utterances[3].features.frames);
  CHECK(mem.corpus.utterances[3].segments == c.utterances[3].segments);
}

TEST_CASE("synthetic corpus: alignments tile every utterance") {
  const SyntheticCorpus sc = GenerateSyntheticInMemory(testing::SmallSpec());
  for (const Utterance& u : sc.corpus.utterances) {
    int next = 0;
    for (const PhoneSegment& s : u.segments) {
      CHECK(s.start_frame == next);
      CHECK(s.has_tone() == s.is_vowel);
      next = s.end_frame;
    }
    CHECK(next == u.features.num_frames());
  }
}

TEST_CASE("noiseless one-frame segments repeat exactly per phone and tone") {
  SyntheticSpec spec = testing::SmallSpec();
  spec.noise_scale = 0.0;
  spec.frames_per_segment = {1, 1};
  spec.consonant_frames_per_segment = {1, 1};
  const SyntheticCorpus sc = GenerateSyntheticInMemory(spec);
  std::map<std::pair<std::string, std::string>, RowVectorF> seen;
  int repeats = 0;
  for (const Utterance& u : sc.corpus.utterances) {
    for (const PhoneSegment& s : u.segments) {
      const RowVectorF f = u.features.frames.row(s.start_frame);
      auto [it, fresh] = seen.emplace(std::pair{s.phone_label, s.tone_label}, f);
      if (!fresh) {
        CHECK(it->second == f);
        ++repeats;
      }
    }
  }
  CHECK(repeats > 100);
}

TEST_CASE("default generator: nearest true phone mean recovers the phone") {
  SyntheticSpec spec;
  spec.num_utterances = {100, 1, 1};
  const SyntheticCorpus sc = GenerateSyntheticInMemory(spec);
  const MatrixD& means = sc.truth.phone_means;
  int correct = 0, total = 0;
  for (const Utterance& u : sc.corpus.utterances) {
    for (const PhoneSegment& s : u.segments) {
      for (int t = s.start_frame; t < s.end_frame; ++t) {
        const VectorD x = u.features.frames.row(t).cast<double>().transpose();
        Eigen::Index best = 0;
        (means.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff(&best);
        correct += PhoneLabel(static_cast<int>(best)) == s.phone_label;
        ++total;
      }
    }
  }
  CHECK(static_cast<double>(correct) / total >= 0.99);
}

TEST_CASE("generator ground truth: orthonormal tone basis, level and contour tones") {
  const SyntheticSpec spec;
  SyntheticSpec small = spec;
  small.num_utterances = {1, 1, 1};
  const SyntheticCorpus sc = GenerateSyntheticInMemory(small);
  const MatrixD& b = sc.truth.tone_basis;
  CHECK((b.transpose() * b - MatrixD::Identity(b.cols(), b.cols())).norm() < 1e-9);
  CHECK((sc.truth.phone_means * b).norm() < 1e-9);
  CHECK(sc.truth.tone_slopes.row(0).norm() == 0.0);
  CHECK(sc.truth.tone_slopes.row(1).norm() > 0.5);
  const VectorD start = ToneTemplate(sc.truth, small, 1, 0.0);
  const VectorD end = ToneTemplate(sc.truth, small, 1, 1.0);
  CHECK((start - end).norm() > 0.0);
  CHECK((ToneTemplate(sc.truth, small, 0, 0.0) - ToneTemplate(sc.truth, small, 0, 0.9))
            .norm() == 0.0);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s;
  s.tone_scale = 1.5;
  CHECK(KindOf([&] { ValidateSyntheticSpec(s); }) == ErrorKind::kInvalidArgument);
  s = SyntheticSpec{};
  s.tone_subspace_dim = 0;
  CHECK_THROWS_AS(ValidateSyntheticSpec(s), Error);
  s = SyntheticSpec{};
  s.num_utterances[2] = 0;
  CHECK_THROWS_AS(ValidateSyntheticSpec(s), Error);
  s = SyntheticSpec{};
  nlohmann::json j = s;
  CHECK(j.get<SyntheticSpec>().seed == s.seed);
  CHECK(j.get<SyntheticSpec>().frames_per_segment.max == s.frames_per_segment.max);
}

TEST_CASE("split views and the training audit") {
  const SyntheticCorpus sc = GenerateSyntheticInMemory(testing::SmallSpec());
  const SplitView train(sc.corpus, Split::kTrain);
  CHECK(train.size() == 60);
  for (const Utterance* u : train.utterances()) CHECK(u->split == Split::kTrain);
  CHECK(StackFrames(train).rows() == static_cast<Eigen::Index>(train.num_frames()));
  SplitAudit::Reset();
  SplitAudit::RecordTrainingAccess(Split::kValidation);
  CHECK(SplitAudit::TrainingAccesses(Split::kValidation) == 1);
  CHECK(SplitAudit::TrainingAccesses(Split::kTest) == 0);
  SplitAudit::Reset();
}

}  // TEST_SUITE

}  // namespace
}  // namespace dsu
