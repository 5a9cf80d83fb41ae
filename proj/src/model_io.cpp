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

#include <cmath>

#include "red/binary_io.hpp"
#include "red/boost.hpp"

namespace red {

namespace {

constexpr std::string_view kMagic{"REDGBDT\0", 8};

}  // namespace

std::vector<std::byte> encode_model(const GbdtModel& model) {
  io::ByteWriter w;
  w.put_raw(kMagic);
  w.put(kModelMajorVersion);
  w.put(kModelMinorVersion);
  w.put(model.schema_fingerprint());
  w.put_string(model.schema().serialize());
  const auto& p = model.params();
  w.put(p.n_trees);
  w.put(p.learning_rate);
  w.put(p.max_leaves);
  w.put(p.min_samples_leaf);
  w.put(p.l2_leaf_penalty);
  w.put(p.n_bins);
  w.put(p.seed);
  w.put(static_cast<std::uint32_t>(p.monotone.size()));
  for (int m : p.monotone) w.put(static_cast<std::int8_t>(m));
  w.put(model.base_score());
  w.put(static_cast<std::uint32_t>(model.trees().size()));
  for (const auto& t : model.trees()) {
    w.put(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        w.put(std::uint8_t{1});
        w.put(n.value);
      } else {
        w.put(std::uint8_t{0});
        w.put(n.feature);
        w.put(n.threshold);
        w.put(static_cast<std::uint8_t>(n.default_left ? 1 : 0));
        w.put(n.left);
        w.put(n.right);
        w.put(n.gain);
      }
    }
  }
  Fnv1a h;
  h.update(w.bytes());
  w.put(h.digest());
  return std::move(w.bytes());
}

GbdtModel decode_model(std::span<const std::byte> bytes) {
  io::ByteReader r(bytes);
  if (r.get_raw(kMagic.size()) != kMagic) throw CorruptFileError("not a model file (bad magic)");
  const auto major = r.get<std::uint16_t>();
  const auto minor = r.get<std::uint16_t>();
  if (major > kModelMajorVersion) {
    throw VersionError("model file version " + std::to_string(major) + "." + std::to_string(minor) +
                       " is newer than supported " + std::to_string(kModelMajorVersion) + "." +
                       std::to_string(kModelMinorVersion));
  }
  if (major != kModelMajorVersion) throw VersionError("unsupported model file version");
  if (bytes.size() < 8 + 8) throw CorruptFileError("unexpected end of file");
  {
    Fnv1a h;
    h.update(bytes.first(bytes.size() - 8));
    io::ByteReader tail(bytes.last(8));
    if (tail.get<std::uint64_t>() != h.digest()) throw CorruptFileError("model checksum mismatch");
  }

  const auto fingerprint = r.get<std::uint64_t>();
  FeatureSchema schema;
  try {
    schema = FeatureSchema::parse(r.get_string());
  } catch (const SchemaError& e) {
    throw CorruptFileError(std::string("model schema is unreadable: ") + e.what());
  }
  if (schema.fingerprint() != fingerprint) throw CorruptFileError("model schema fingerprint mismatch");

  GbdtParams p;
  p.n_trees = r.get<std::uint32_t>();
  p.learning_rate = r.get<double>();
  p.max_leaves = r.get<std::uint32_t>();
  p.min_samples_leaf = r.get<std::uint32_t>();
  p.l2_leaf_penalty = r.get<double>();
  p.n_bins = r.get<std::uint32_t>();
  p.seed = r.get<std::uint64_t>();
  const auto n_mono = r.get<std::uint32_t>();
  if (n_mono != schema.size()) throw CorruptFileError("monotone flag count does not match schema");
  for (std::uint32_t i = 0; i < n_mono; ++i) p.monotone.push_back(r.get<std::int8_t>());
  const double base = r.get<double>();
  const auto n_trees = r.get<std::uint32_t>();
  std::vector<Tree> trees;
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    Tree tree;
    const auto n_nodes = r.get<std::uint32_t>();
    if (n_nodes == 0 || n_nodes > r.remaining()) throw CorruptFileError("bad node count");
    tree.nodes.resize(n_nodes);
    for (auto& n : tree.nodes) {
      const auto kind = r.get<std::uint8_t>();
      if (kind == 1) {
        n.value = r.get<double>();
      } else if (kind == 0) {
        n.feature = r.get<std::int32_t>();
        n.threshold = r.get<double>();
        n.default_left = r.get<std::uint8_t>() != 0;
        n.left = r.get<std::uint32_t>();
        n.right = r.get<std::uint32_t>();
        n.gain = r.get<double>();
        if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= schema.size() ||
            n.left >= n_nodes || n.right >= n_nodes) {
          throw CorruptFileError("tree node refers outside the model");
        }
      } else {
        throw CorruptFileError("unknown tree node kind");
      }
    }
    // Children must come after their parent so evaluation terminates.
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
      const auto& n = tree.nodes[i];
      if (!n.is_leaf() && (n.left <= i || n.right <= i)) {
        throw CorruptFileError("tree node order is invalid");
      }
    }
    trees.push_back(std::move(tree));
  }
  r.get<std::uint64_t>();
  if (r.remaining() != 0) throw CorruptFileError("trailing bytes after model");
  return GbdtModel(std::move(schema), std::move(p), base, std::move(trees));
}

void save_model(const GbdtModel& model, const std::string& path) {
  io::write_file_bytes(path, encode_model(model));
}

GbdtModel load_model(const std::string& path) { return decode_model(io::read_file_bytes(path)); }

}  // namespace red
