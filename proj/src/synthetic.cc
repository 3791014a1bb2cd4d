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
#include "dsu/synthetic.h"

#include <cstdio>
#include <system_error>

#include "dsu/error.h"
#include "dsu/feature_io.h"
#include "dsu/random.h"

namespace dsu {

namespace fs = std::filesystem;

void ValidateSyntheticSpec(const SyntheticSpec& s) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) Fail(ErrorKind::kInvalidArgument, "synthetic spec: " + msg);
  };
  require(s.num_phones >= 1, "num_phones must be >= 1");
  require(s.num_tones >= 1, "num_tones must be >= 1");
  require(s.dim >= 1, "dim must be >= 1");
  require(s.tone_subspace_dim >= 1 && s.tone_subspace_dim <= s.dim,
          "tone_subspace_dim must be in [1, dim]");
  require(s.vowel_phones >= 1 && s.vowel_phones <= s.num_phones,
          "vowel_phones must be in [1, num_phones]");
  require(s.phone_spread > 0, "phone_spread must be positive");
  require(s.tone_scale >= 0 && s.tone_scale < s.phone_spread,
          "tone_scale must be in [0, phone_spread)");
  require(s.noise_scale >= 0, "noise_scale must be non-negative");
  require(s.template_gain > 0, "template_gain must be positive");
  for (const IntRange& r : {s.frames_per_segment,
                            s.consonant_frames_per_segment,
                            s.segments_per_utterance}) {
    require(r.min >= 1 && r.max >= r.min, "ranges need 1 <= min <= max");
  }
  for (int n : s.num_utterances) {
    require(n >= 1, "num_utterances must be >= 1 per split");
  }
}

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = nlohmann::json{
      {"num_phones", s.num_phones},
      {"num_tones", s.num_tones},
      {"dim", s.dim},
      {"phone_spread", s.phone_spread},
      {"tone_scale", s.tone_scale},
      {"noise_scale", s.noise_scale},
      {"tone_subspace_dim", s.tone_subspace_dim},
      {"vowel_phones", s.vowel_phones},
      {"template_gain", s.template_gain},
      {"frames_per_segment", {s.frames_per_segment.min, s.frames_per_segment.max}},
      {"consonant_frames_per_segment",
       {s.consonant_frames_per_segment.min, s.consonant_frames_per_segment.max}},
      {"segments_per_utterance",
       {s.segments_per_utterance.min, s.segments_per_utterance.max}},
      {"num_utterances", s.num_utterances},
      {"frame_rate_hz", s.frame_rate_hz},
      {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  auto range = [&](const char* key, IntRange* r) {
    if (j.contains(key)) {
      const auto& v = j.at(key);
      r->min = v.at(0).get<int>();
      r->max = v.at(1).get<int>();
    }
  };
  auto get = [&](const char* key, auto* field) {
    if (j.contains(key)) j.at(key).get_to(*field);
  };
  get("num_phones", &s.num_phones);
  get("num_tones", &s.num_tones);
  get("dim", &s.dim);
  get("phone_spread", &s.phone_spread);
  get("tone_scale", &s.tone_scale);
  get("noise_scale", &s.noise_scale);
  get("tone_subspace_dim", &s.tone_subspace_dim);
  get("vowel_phones", &s.vowel_phones);
  get("template_gain", &s.template_gain);
  range("frames_per_segment", &s.frames_per_segment);
  range("consonant_frames_per_segment", &s.consonant_frames_per_segment);
  range("segments_per_utterance", &s.segments_per_utterance);
  get("num_utterances", &s.num_utterances);
  get("frame_rate_hz", &s.frame_rate_hz);
  get("seed", &s.seed);
}

std::string PhoneLabel(int phone) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "ph%02d", phone);
  return buf;
}

std::string ToneLabel(int tone) { return "T" + std::to_string(tone + 1); }

VectorD ToneTemplate(const SyntheticGroundTruth& truth,
                     const SyntheticSpec& spec, int tone, double s) {
  const double scale = spec.template_gain * spec.tone_scale;
  return scale * (truth.tone_levels.row(tone).transpose() +
                  (2.0 * s - 1.0) * truth.tone_slopes.row(tone).transpose());
}

namespace {

MatrixD GaussianMatrix(Rng& rng, int rows, int cols) {
  MatrixD m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.Normal();
  }
  return m;
}

MatrixD OrthonormalColumns(const MatrixD& a) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() *
                      Eigen::MatrixXd::Identity(a.rows(), a.cols());
  return q;
}

void NormaliseRows(MatrixD* m) {
  for (Eigen::Index r = 0; r < m->rows(); ++r) {
    const double n = m->row(r).norm();
    if (n > 0) m->row(r) /= n;
  }
}

// Tone subspace basis. When the phone means leave enough room, the basis is
// drawn inside their orthogonal complement so tone is linearly decodable
// from the latents regardless of phone identity.
MatrixD ToneBasis(Rng& rng, const MatrixD& phone_means, int dim, int d_tone) {
  const int phones = static_cast<int>(phone_means.rows());
  if (dim - phones >= d_tone) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(phone_means.transpose());
    const Eigen::MatrixXd full = qr.householderQ();
    const Eigen::MatrixXd complement = full.rightCols(dim - phones);
    const MatrixD mix = GaussianMatrix(rng, dim - phones, d_tone);
    return OrthonormalColumns(complement * mix);
  }
  return OrthonormalColumns(GaussianMatrix(rng, dim, d_tone));
}

}  // namespace

SyntheticCorpus GenerateSyntheticInMemory(const SyntheticSpec& spec) {
  ValidateSyntheticSpec(spec);
  SyntheticCorpus out;
  SyntheticGroundTruth& truth = out.truth;

  Rng model_rng(DeriveSeed(spec.seed, 0));
  truth.phone_means =
      GaussianMatrix(model_rng, spec.num_phones, spec.dim) * spec.phone_spread;
  truth.tone_basis = ToneBasis(model_rng, truth.phone_means, spec.dim,
                               spec.tone_subspace_dim);
  truth.tone_levels =
      GaussianMatrix(model_rng, spec.num_tones, spec.tone_subspace_dim);
  NormaliseRows(&truth.tone_levels);
  truth.tone_slopes =
      GaussianMatrix(model_rng, spec.num_tones, spec.tone_subspace_dim);
  NormaliseRows(&truth.tone_slopes);
  // Even-indexed tones are level tones, odd-indexed ones are contours.
  for (int t = 0; t < spec.num_tones; t += 2) truth.tone_slopes.row(t).setZero();

  // Precomputed D-dimensional tone offsets for level and slope parts.
  const double scale = spec.template_gain * spec.tone_scale;
  const MatrixD level_offsets =
      scale * truth.tone_levels * truth.tone_basis.transpose();
  const MatrixD slope_offsets =
      scale * truth.tone_slopes * truth.tone_basis.transpose();

  Corpus& corpus = out.corpus;
  corpus.feature_dim = spec.dim;
  const int consonants = spec.num_phones - spec.vowel_phones;
  for (int split_index = 0; split_index < 3; ++split_index) {
    const Split split = static_cast<Split>(split_index);
    Rng rng(DeriveSeed(spec.seed, 1 + split_index));
    for (int n = 0; n < spec.num_utterances[split_index]; ++n) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%05d",
                    std::string(SplitName(split)).c_str(), n);
      Utterance utt;
      utt.split = split;
      utt.features.utterance_id = id;
      utt.features.frame_rate_hz = spec.frame_rate_hz;

      const int num_segments = static_cast<int>(rng.UniformInt(
          spec.segments_per_utterance.min, spec.segments_per_utterance.max));
      struct Draft {
        int phone, tone, length;  // tone -1 for consonants
      };
      std::vector<Draft> drafts;
      int total_frames = 0;
      for (int s = 0; s < num_segments; ++s) {
        // Syllables are consonant + vowel; without consonant phones every
        // segment is a vowel.
        const bool vowel = consonants == 0 || s % 2 == 1;
        Draft d;
        if (vowel) {
          d.phone = static_cast<int>(rng.UniformInt(0, spec.vowel_phones - 1));
          d.tone = static_cast<int>(rng.UniformInt(0, spec.num_tones - 1));
          d.length = static_cast<int>(rng.UniformInt(
              spec.frames_per_segment.min, spec.frames_per_segment.max));
        } else {
          d.phone = spec.vowel_phones +
                    static_cast<int>(rng.UniformInt(0, consonants - 1));
          d.tone = -1;
          d.length = static_cast<int>(
              rng.UniformInt(spec.consonant_frames_per_segment.min,
                             spec.consonant_frames_per_segment.max));
        }
        drafts.push_back(d);
        total_frames += d.length;
      }

      utt.features.frames.resize(total_frames, spec.dim);
      int pos = 0;
      for (const Draft& d : drafts) {
        for (int i = 0; i < d.length; ++i) {
          Eigen::RowVectorXd frame = truth.phone_means.row(d.phone);
          if (d.tone >= 0) {
            const double s = static_cast<double>(i) / d.length;
            frame += level_offsets.row(d.tone) +
                     (2.0 * s - 1.0) * slope_offsets.row(d.tone);
          }
          for (int c = 0; c < spec.dim; ++c) {
            frame(c) += spec.noise_scale * rng.Normal();
          }
          utt.features.frames.row(pos + i) = frame.cast<float>();
        }
        PhoneSegment seg;
        seg.utterance_id = id;
        seg.start_frame = pos;
        seg.end_frame = pos + d.length;
        seg.phone_label = PhoneLabel(d.phone);
        seg.is_vowel = d.tone >= 0;
        seg.tone_label =
            seg.is_vowel ? ToneLabel(d.tone) : std::string(kNullTone);
        ++truth.segments[split_index];
        if (seg.is_vowel) {
          ++truth.vowel_segments[split_index];
          ++truth.phone_counts[split_index][seg.phone_label];
          ++truth.tone_counts[split_index][seg.tone_label];
        }
        utt.segments.push_back(std::move(seg));
        pos += d.length;
      }
      corpus.utterances.push_back(std::move(utt));
    }
  }
  return out;
}

fs::path WriteCorpus(const Corpus& corpus, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir / "features", ec);
  if (!ec) fs::create_directories(out_dir / "alignments", ec);
  if (ec) {
    Fail(ErrorKind::kIo, "cannot create corpus directory " + out_dir.string() +
                             ": " + ec.message());
  }
  CorpusManifest manifest;
  manifest.base_dir = out_dir;
  manifest.feature_dim = corpus.feature_dim;
  for (const Utterance& u : corpus.utterances) {
    ManifestEntry e;
    e.utterance_id = u.features.utterance_id;
    e.feature_path = fs::path("features") / (e.utterance_id + ".dsuf");
    e.alignment_path = fs::path("alignments") / (e.utterance_id + ".tsv");
    e.split = u.split;
    SaveFeatureFile(u.features, out_dir / e.feature_path);
    SaveAlignments(u.segments, out_dir / e.alignment_path);
    manifest.entries.push_back(std::move(e));
  }
  const fs::path manifest_path = out_dir / "manifest.json";
  SaveManifest(manifest, manifest_path);
  return manifest_path;
}

fs::path GenerateSyntheticCorpus(const SyntheticSpec& spec,
                                 const fs::path& out_dir,
                                 SyntheticGroundTruth* truth) {
  SyntheticCorpus generated = GenerateSyntheticInMemory(spec);
  const fs::path manifest = WriteCorpus(generated.corpus, out_dir);
  if (truth != nullptr) *truth = std::move(generated.truth);
  return manifest;
}

}  // namespace dsu
