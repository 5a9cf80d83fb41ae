/*
 * Copyright 2026 The RED Collections Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include "red/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "red/binary_io.hpp"

namespace red {

std::string_view provenance_name(Provenance p) {
  return p == Provenance::kCarousel ? "CAROUSEL" : "SAMPLED";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "CAROUSEL" || s == "carousel") return Provenance::kCarousel;
  if (s == "SAMPLED" || s == "sampled") return Provenance::kSampled;
  throw ConfigError("unknown provenance '" + std::string(s) + "'");
}

void LabeledDataset::note_provenance(Provenance p) {
  if (std::find(provenances_.begin(), provenances_.end(), p) == provenances_.end()) {
    provenances_.push_back(p);
    std::sort(provenances_.begin(), provenances_.end());
  }
}

void LabeledDataset::add_pair(const LabeledPair& pair, std::span<const double> positive_row,
                              std::span<const double> negative_row) {
  if (pair.positive == pair.negative) throw SchemaError("pair positive equals negative");
  if (positive_row.size() != width() || negative_row.size() != width()) {
    throw SchemaError("pair rows do not match the dataset schema");
  }
  const auto id = static_cast<std::uint32_t>(pairs_.size());
  pairs_.push_back(pair);
  note_provenance(pair.provenance);
  values_.insert(values_.end(), positive_row.begin(), positive_row.end());
  values_.insert(values_.end(), negative_row.begin(), negative_row.end());
  labels_.push_back(1);
  labels_.push_back(0);
  meta_.push_back({id, pair.user, pair.positive, pair.home, pair.context.shift});
  meta_.push_back({id, pair.user, pair.negative, pair.home, pair.context.shift});
}

LabeledDataset LabeledDataset::project(const FeatureSchema& subset) const {
  const auto cols = schema_.projection_of(subset);
  LabeledDataset out(subset);
  out.labels_ = labels_;
  out.meta_ = meta_;
  out.pairs_ = pairs_;
  out.provenances_ = provenances_;
  out.values_.reserve(rows() * cols.size());
  for (std::size_t r = 0; r < rows(); ++r) {
    const auto src = row(r);
    for (auto c : cols) out.values_.push_back(src[c]);
  }
  return out;
}

LabeledDataset LabeledDataset::select_pairs(std::span<const std::uint32_t> pair_ids) const {
  LabeledDataset out(schema_);
  for (auto p : pair_ids) out.add_pair(pairs_.at(p), row(2 * p), row(2 * p + 1));
  return out;
}

bool LabeledDataset::operator==(const LabeledDataset& o) const {
  if (!(schema_ == o.schema_) || labels_ != o.labels_ || pairs_.size() != o.pairs_.size()) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double a = values_[i];
    const double b = o.values_[i];
    if (!(a == b || (std::isnan(a) && std::isnan(b)))) return false;
  }
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const auto& a = pairs_[i];
    const auto& b = o.pairs_[i];
    if (a.user != b.user || a.positive != b.positive || a.negative != b.negative || a.home != b.home ||
        a.provenance != b.provenance || a.session != b.session ||
        a.context.timestamp != b.context.timestamp || a.context.shift != b.context.shift ||
        a.context.region != b.context.region) {
      return false;
    }
  }
  return values_.size() == o.values_.size();
}

namespace {

LabeledPair make_pair(const SessionEvent& e, std::size_t session, CollectionId pos, CollectionId neg,
                      Provenance p) {
  return LabeledPair{e.user, e.context, pos, neg, e.context.home, p, session};
}

void add_extracted(LabeledDataset& ds, const FeatureExtractor& fx, const LabeledPair& pair,
                   std::vector<double>& pos, std::vector<double>& neg) {
  fx.extract_into(pair.user, pair.positive, pair.context.shift, pos);
  fx.extract_into(pair.user, pair.negative, pair.context.shift, neg);
  ds.add_pair(pair, pos, neg);
}

}  // namespace

LabeledDataset build_carousel_dataset(std::span<const SessionEvent> log,
                                      const FeatureExtractor& extractor, std::uint64_t seed) {
  LabeledDataset ds(extractor.schema());
  std::vector<double> pos(ds.width());
  std::vector<double> neg(ds.width());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& e = log[i];
    if (e.surface != Surface::kCarousel || !e.purchased || e.displayed.size() < 2) continue;
    std::vector<CollectionId> others;
    for (auto c : e.displayed) {
      if (c != *e.purchased) others.push_back(c);
    }
    if (others.empty()) continue;
    Rng rng(derive_seed(seed, "carousel-negative", i));
    const auto negative = others[rng.index(others.size())];
    add_extracted(ds, extractor, make_pair(e, i, *e.purchased, negative, Provenance::kCarousel), pos,
                  neg);
  }
  return ds;
}

LabeledDataset build_unbiased_dataset(std::span<const SessionEvent> log,
                                      const FeatureExtractor& extractor) {
  LabeledDataset ds(extractor.schema());
  std::vector<double> pos(ds.width());
  std::vector<double> neg(ds.width());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& e = log[i];
    if (e.surface != Surface::kRed || !e.exploration || !e.purchased) continue;
    if (e.displayed.size() != 2) continue;
    const auto negative = e.displayed[0] == *e.purchased ? e.displayed[1] : e.displayed[0];
    add_extracted(ds, extractor, make_pair(e, i, *e.purchased, negative, Provenance::kSampled), pos,
                  neg);
  }
  return ds;
}

LabeledDataset merge_datasets(const LabeledDataset& a, const LabeledDataset& b,
                              bool allow_mixed_provenance) {
  if (!(a.schema() == b.schema())) throw SchemaError("cannot merge datasets with different schemas");
  std::set<Provenance> prov(a.provenances().begin(), a.provenances().end());
  prov.insert(b.provenances().begin(), b.provenances().end());
  if (prov.size() > 1 && !allow_mixed_provenance) {
    throw ConfigError("refusing to mix CAROUSEL and SAMPLED rows without the merge flag");
  }
  LabeledDataset out = a;
  for (std::size_t p = 0; p < b.pairs().size(); ++p) {
    out.add_pair(b.pairs()[p], b.row(2 * p), b.row(2 * p + 1));
  }
  return out;
}

ExplorationPolicy::ExplorationPolicy(double rate, std::shared_ptr<const DisplayPolicy> incumbent)
    : rate_(rate), incumbent_(std::move(incumbent)) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("exploration rate must be in (0, 1]");
  if (!incumbent_) throw ConfigError("exploration policy needs an incumbent policy");
}

Display ExplorationPolicy::choose(const User& user, const Context& ctx,
                                  std::span<const CollectionId> eligible, Rng& rng) const {
  const bool explore = rng.uniform() < rate_;
  if (explore && eligible.size() >= 2) {
    const auto n = eligible.size();
    const auto i = rng.index(n);
    auto j = rng.index(n - 1);
    if (j >= i) ++j;
    return Display{{eligible[i], eligible[j]}, true};
  }
  Display d = incumbent_->choose(user, ctx, eligible, rng);
  d.exploration = false;
  return d;
}

DatasetSplit split_dataset(const LabeledDataset& ds, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout_fraction must be in (0, 1)");
  }
  std::set<std::uint32_t> user_set;
  for (const auto& p : ds.pairs()) user_set.insert(p.user.value);
  std::vector<std::uint32_t> users(user_set.begin(), user_set.end());
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(users);
  const auto n_test = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(users.size())));
  const std::set<std::uint32_t> test_users(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::uint32_t> train_ids;
  std::vector<std::uint32_t> test_ids;
  for (std::uint32_t p = 0; p < ds.pairs().size(); ++p) {
    (test_users.contains(ds.pairs()[p].user.value) ? test_ids : train_ids).push_back(p);
  }
  return {ds.select_pairs(train_ids), ds.select_pairs(test_ids)};
}

bool DatasetAudit::ok() const {
  if (locality_violations != 0 || pairing_violations != 0) return false;
  if (2 * global.positives != global.rows) return false;
  for (const auto& [home, c] : per_home) {
    if (2 * c.positives != c.rows) return false;
  }
  return true;
}

DatasetAudit audit_dataset(const LabeledDataset& ds, std::span<const SessionEvent> log) {
  DatasetAudit a;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    const auto y = ds.labels()[r];
    const auto& m = ds.meta()[r];
    ++a.global.rows;
    a.global.positives += y;
    auto& h = a.per_home[m.home.value];
    ++h.rows;
    h.positives += y;
  }
  for (std::size_t p = 0; p < ds.pairs().size(); ++p) {
    const auto& pair = ds.pairs()[p];
    const auto& pm = ds.meta()[2 * p];
    const auto& nm = ds.meta()[2 * p + 1];
    if (ds.labels()[2 * p] != 1 || ds.labels()[2 * p + 1] != 0 || pm.pair != p || nm.pair != p ||
        pm.user != nm.user || pm.home != nm.home || pm.shift != nm.shift ||
        pm.collection != pair.positive || nm.collection != pair.negative || pair.positive == pair.negative) {
      ++a.pairing_violations;
    }
    if (pair.session >= log.size()) {
      ++a.locality_violations;
      continue;
    }
    const auto& e = log[pair.session];
    auto shown = [&](CollectionId c) {
      return std::find(e.displayed.begin(), e.displayed.end(), c) != e.displayed.end();
    };
    if (e.user != pair.user || e.context.home != pair.home || e.context.shift != pair.context.shift ||
        e.context.timestamp != pair.context.timestamp || !e.purchased || *e.purchased != pair.positive ||
        !shown(pair.positive) || !shown(pair.negative)) {
      ++a.locality_violations;
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Directory format.

namespace {

void append_number(std::string& out, double v) {
  if (std::isnan(v)) {
    out += "NA";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CorruptFileError("bad " + what + " value '" + s + "'");
  }
}

double parse_value(const std::string& s) {
  if (s == "NA") return kNaN;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw CorruptFileError("bad feature value '" + s + "'");
  return v;
}

std::uint32_t u32(std::uint64_t v) { return static_cast<std::uint32_t>(v); }

const char* const kMetaHeader = "pair\tuser\tcollection\thome\tshift\tlabel";

}  // namespace

void write_dataset(const LabeledDataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  io::write_file_text(dir + "/schema.tsv", ds.schema().serialize());

  std::string f = kMetaHeader;
  for (const auto& spec : ds.schema().features()) {
    f += '\t';
    f += spec.name;
    f += spec.monotone > 0 ? ":+1" : spec.monotone < 0 ? ":-1" : ":0";
  }
  f += '\n';
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    const auto& m = ds.meta()[r];
    f += std::to_string(m.pair) + '\t' + std::to_string(m.user.value) + '\t' +
         std::to_string(m.collection.value) + '\t' + std::to_string(m.home.value) + '\t' +
         std::string(shift_name(m.shift)) + '\t' + std::to_string(ds.labels()[r]);
    for (double v : ds.row(r)) {
      f += '\t';
      append_number(f, v);
    }
    f += '\n';
  }
  io::write_file_text(dir + "/features.tsv", f);

  std::string p = "pair\tuser\thome\tshift\ttimestamp\tregion\tpositive\tnegative\tprovenance\tsession\n";
  for (std::size_t i = 0; i < ds.pairs().size(); ++i) {
    const auto& x = ds.pairs()[i];
    p += std::to_string(i) + '\t' + std::to_string(x.user.value) + '\t' + std::to_string(x.home.value) +
         '\t' + std::string(shift_name(x.context.shift)) + '\t' + std::to_string(x.context.timestamp) +
         '\t' + std::to_string(x.context.region.value) + '\t' + std::to_string(x.positive.value) + '\t' +
         std::to_string(x.negative.value) + '\t' + std::string(provenance_name(x.provenance)) + '\t' +
         std::to_string(x.session) + '\n';
  }
  io::write_file_text(dir + "/pairs.tsv", p);
}

LabeledDataset read_dataset(const std::string& dir) {
  FeatureSchema schema = FeatureSchema::parse(io::read_file_text(dir + "/schema.tsv"));
  LabeledDataset ds(schema);

  std::istringstream pairs_in(io::read_file_text(dir + "/pairs.tsv"));
  std::string line;
  std::getline(pairs_in, line);
  while (std::getline(pairs_in, line)) {
    if (line.empty()) continue;
    const auto c = split_tabs(line);
    if (c.size() != 10) throw CorruptFileError("pairs.tsv: wrong column count");
    if (parse_u64(c[0], "pair") != ds.pairs_.size()) throw CorruptFileError("pairs.tsv: pair ids out of order");
    LabeledPair x;
    x.user = UserId(u32(parse_u64(c[1], "user")));
    x.home = HomeId(u32(parse_u64(c[2], "home")));
    x.context.home = x.home;
    x.context.shift = parse_shift(c[3]);
    x.context.timestamp = static_cast<Timestamp>(std::stoll(c[4]));
    x.context.region = RegionId(u32(parse_u64(c[5], "region")));
    x.positive = CollectionId(u32(parse_u64(c[6], "positive")));
    x.negative = CollectionId(u32(parse_u64(c[7], "negative")));
    x.provenance = parse_provenance(c[8]);
    x.session = parse_u64(c[9], "session");
    ds.pairs_.push_back(x);
    ds.note_provenance(x.provenance);
  }

  std::istringstream feat_in(io::read_file_text(dir + "/features.tsv"));
  std::getline(feat_in, line);
  const auto header = split_tabs(line);
  if (header.size() != 6 + schema.size()) throw CorruptFileError("features.tsv: header does not match schema");
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (header[6 + i].substr(0, header[6 + i].rfind(':')) != schema[i].name) {
      throw CorruptFileError("features.tsv: column '" + header[6 + i] + "' does not match schema");
    }
  }
  while (std::getline(feat_in, line)) {
    if (line.empty()) continue;
    const auto c = split_tabs(line);
    if (c.size() != header.size()) throw CorruptFileError("features.tsv: wrong column count");
    RowMeta m;
    m.pair = u32(parse_u64(c[0], "pair"));
    m.user = UserId(u32(parse_u64(c[1], "user")));
    m.collection = CollectionId(u32(parse_u64(c[2], "collection")));
    m.home = HomeId(u32(parse_u64(c[3], "home")));
    m.shift = parse_shift(c[4]);
    const auto label = parse_u64(c[5], "label");
    if (label > 1) throw CorruptFileError("features.tsv: label must be 0 or 1");
    if (m.pair >= ds.pairs_.size() || ds.meta_.size() != 2 * m.pair + (label == 1 ? 0 : 1)) {
      throw CorruptFileError("features.tsv: rows are not in pair order");
    }
    ds.meta_.push_back(m);
    ds.labels_.push_back(static_cast<std::uint8_t>(label));
    for (std::size_t i = 6; i < c.size(); ++i) ds.values_.push_back(parse_value(c[i]));
  }
  if (ds.meta_.size() != 2 * ds.pairs_.size()) throw CorruptFileError("features.tsv: row count mismatch");
  return ds;
}

}  // namespace red
