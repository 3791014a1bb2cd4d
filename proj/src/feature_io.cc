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
#include "dsu/feature_io.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "binary_io.h"
#include "dsu/error.h"

namespace dsu {

namespace fs = std::filesystem;

FeatureSequence LoadFeatureFile(const fs::path& path,
                                std::string utterance_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open feature file " + path.string());
  const std::string name = path.string();
  internal::ReadHeader(in, kFeatureMagic, kFeatureVersion, name);
  uint32_t t = 0, d = 0;
  if (!internal::ReadU32(in, &t) || !internal::ReadU32(in, &d)) {
    Fail(ErrorKind::kTruncated, name + ": file too short for header");
  }
  if (t == 0 || d == 0) {
    Fail(ErrorKind::kFormat, name + ": empty shape " + std::to_string(t) +
                                 "x" + std::to_string(d));
  }
  FeatureSequence seq;
  seq.utterance_id =
      utterance_id.empty() ? path.stem().string() : std::move(utterance_id);
  seq.frames.resize(t, d);
  if (!internal::ReadF32(in, seq.frames.data(),
                         static_cast<std::size_t>(t) * d)) {
    Fail(ErrorKind::kTruncated,
         name + ": header declares " + std::to_string(t) + "x" +
             std::to_string(d) + " but payload is shorter");
  }
  if (!seq.frames.allFinite()) {
    Fail(ErrorKind::kNonFinite, name + ": non-finite feature value");
  }
  return seq;
}

void SaveFeatureFile(const FeatureSequence& seq, const fs::path& path) {
  ValidateFeatureSequence(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write feature file " + path.string());
  out.write(kFeatureMagic, 4);
  internal::WriteU32(out, kFeatureVersion);
  internal::WriteU32(out, static_cast<uint32_t>(seq.frames.rows()));
  internal::WriteU32(out, static_cast<uint32_t>(seq.frames.cols()));
  internal::WriteF32(out, seq.frames.data(), seq.frames.size());
  if (!out) Fail(ErrorKind::kIo, "write failed for " + path.string());
}

namespace {

std::vector<std::string_view> SplitTabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', pos);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      return fields;
    }
    fields.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
}

bool ParseInt(std::string_view s, int* out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), *out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

constexpr std::string_view kAlignmentHeader =
    "utterance_id\tstart_frame\tend_frame\tphone\ttone\tis_vowel";

}  // namespace

std::vector<PhoneSegment> ParseAlignments(const std::string& text,
                                          const FeatureSequence& seq,
                                          const std::string& source_name) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto fail = [&](ErrorKind kind, const std::string& msg) {
    Fail(kind, source_name + ":" + std::to_string(line_no) + ": " + msg);
  };
  if (!std::getline(in, line)) {
    line_no = 1;
    fail(ErrorKind::kFormat, "missing header");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kAlignmentHeader) fail(ErrorKind::kFormat, "bad header");

  std::vector<std::pair<int, PhoneSegment>> rows;  // (line, segment)
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = SplitTabs(line);
    if (f.size() != 6) fail(ErrorKind::kFormat, "expected 6 columns");
    if (f[0] != seq.utterance_id) continue;
    PhoneSegment seg;
    seg.utterance_id = std::string(f[0]);
    if (!ParseInt(f[1], &seg.start_frame) || !ParseInt(f[2], &seg.end_frame)) {
      fail(ErrorKind::kFormat, "frame indices must be integers");
    }
    seg.phone_label = std::string(f[3]);
    seg.tone_label = std::string(f[4]);
    if (seg.phone_label.empty() || seg.tone_label.empty()) {
      fail(ErrorKind::kFormat, "empty phone or tone label");
    }
    if (f[5] == "1") {
      seg.is_vowel = true;
    } else if (f[5] == "0") {
      seg.is_vowel = false;
    } else {
      fail(ErrorKind::kFormat, "is_vowel must be 0 or 1");
    }
    if (seg.start_frame < 0 || seg.end_frame <= seg.start_frame ||
        seg.end_frame > seq.num_frames()) {
      fail(ErrorKind::kRange,
           "span [" + std::to_string(seg.start_frame) + ", " +
               std::to_string(seg.end_frame) + ") outside [0, " +
               std::to_string(seq.num_frames()) + ")");
    }
    rows.emplace_back(line_no, std::move(seg));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.second.start_frame < b.second.start_frame;
  });
  std::vector<PhoneSegment> segments;
  segments.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].second.start_frame < rows[i - 1].second.end_frame) {
      line_no = rows[i].first;
      fail(ErrorKind::kOverlap,
           "segment overlaps the one at line " +
               std::to_string(rows[i - 1].first));
    }
    segments.push_back(std::move(rows[i].second));
  }
  return segments;
}

std::vector<PhoneSegment> LoadAlignments(const fs::path& path,
                                         const FeatureSequence& seq) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open alignment file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ParseAlignments(buffer.str(), seq, path.string());
}

void SaveAlignments(const std::vector<PhoneSegment>& segments,
                    const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write alignment file " + path.string());
  out << kAlignmentHeader << '\n';
  for (const PhoneSegment& s : segments) {
    out << s.utterance_id << '\t' << s.start_frame << '\t' << s.end_frame
        << '\t' << s.phone_label << '\t' << s.tone_label << '\t'
        << (s.is_vowel ? 1 : 0) << '\n';
  }
  if (!out) Fail(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace dsu
