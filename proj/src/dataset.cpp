#include "ranklab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace ranklab {
namespace {

int clamp_label(long v) { return static_cast<int>(std::clamp(v, 0L, 4L)); }

struct ParsedDoc {
  int qid = 0;
  int label = 0;
  std::map<int, double> features;  // 1-based feature id -> value
};

ParsedDoc parse_line(const std::string& raw, int line_no) {
  std::string text = raw;
  if (const auto hash = text.find('#'); hash != std::string::npos) text.resize(hash);
  std::istringstream in(text);

  ParsedDoc doc;
  std::string token;
  if (!(in >> token)) throw ParseError(line_no, "missing label");
  std::size_t used = 0;
  long label = 0;
  try {
    label = std::stol(token, &used);
  } catch (const std::exception&) {
    throw ParseError(line_no, "bad label '" + token + "'");
  }
  if (used != token.size()) throw ParseError(line_no, "bad label '" + token + "'");
  doc.label = clamp_label(label);

  if (!(in >> token) || token.rfind("qid:", 0) != 0) {
    throw ParseError(line_no, "expected qid:<int>");
  }
  try {
    doc.qid = std::stoi(token.substr(4));
  } catch (const std::exception&) {
    throw ParseError(line_no, "bad qid '" + token + "'");
  }

  while (in >> token) {
    const auto colon = token.find(':');
    if (colon == std::string::npos) throw ParseError(line_no, "bad feature '" + token + "'");
    int fid = 0;
    double value = 0.0;
    try {
      fid = std::stoi(token.substr(0, colon));
      value = std::stod(token.substr(colon + 1));
    } catch (const std::exception&) {
      throw ParseError(line_no, "bad feature '" + token + "'");
    }
    if (fid < 1) throw ParseError(line_no, "feature ids are 1-based");
    doc.features[fid] = value;
  }
  return doc;
}

}  // namespace

Dataset parse_letor(std::istream& in) {
  std::vector<ParsedDoc> docs;
  std::string line;
  int line_no = 0;
  int max_fid = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    docs.push_back(parse_line(line, line_no));
    if (!docs.back().features.empty()) {
      max_fid = std::max(max_fid, docs.back().features.rbegin()->first);
    }
  }
  if (docs.empty()) throw InvalidInputError("empty dataset");

  Dataset dataset;
  dataset.feature_dim = max_fid;
  std::map<int, std::size_t> query_index;  // qid -> index into queries
  for (const ParsedDoc& doc : docs) {
    auto [it, inserted] = query_index.try_emplace(doc.qid, dataset.queries.size());
    if (inserted) {
      Query q;
      q.id = doc.qid;
      dataset.queries.push_back(std::move(q));
    }
    Query& q = dataset.queries[it->second];
    std::vector<double> x(max_fid, 0.0);
    for (const auto& [fid, value] : doc.features) x[fid - 1] = value;
    q.features.push_back(std::move(x));
    q.labels.push_back(doc.label);
  }
  return dataset;
}

void write_letor(const Dataset& dataset, std::ostream& out) {
  out.precision(17);
  for (const Query& q : dataset.queries) {
    for (DocId d = 0; d < q.num_docs(); ++d) {
      out << q.labels[d] << " qid:" << q.id;
      for (int f = 0; f < dataset.feature_dim; ++f) {
        if (q.features[d][f] != 0.0) out << ' ' << (f + 1) << ':' << q.features[d][f];
      }
      out << '\n';
    }
  }
}

Dataset generate_synthetic(int num_queries, int docs_per_query, int feature_dim,
                           RandomStream& rng) {
  if (num_queries < 1 || docs_per_query < 1 || feature_dim < 1) {
    throw InvalidInputError("synthetic dataset counts must be >= 1");
  }
  Dataset dataset;
  dataset.feature_dim = feature_dim;

  std::vector<double> truth(feature_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  for (double& w : truth) w = scale * rng.normal();

  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(num_queries) * docs_per_query);
  for (int qi = 0; qi < num_queries; ++qi) {
    Query q;
    q.id = qi;
    for (int di = 0; di < docs_per_query; ++di) {
      std::vector<double> x(feature_dim);
      for (double& v : x) v = rng.normal();
      double s = 0.3 * rng.normal();
      for (int f = 0; f < feature_dim; ++f) s += truth[f] * x[f];
      scores.push_back(s);
      q.features.push_back(std::move(x));
      q.labels.push_back(0);  // assigned after the percentile cuts are known
    }
    dataset.queries.push_back(std::move(q));
  }

  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  auto percentile = [&](double p) {
    const auto idx = static_cast<std::size_t>(p * (sorted.size() - 1));
    return sorted[idx];
  };
  const double cuts[4] = {percentile(0.30), percentile(0.55), percentile(0.75),
                          percentile(0.90)};

  std::size_t i = 0;
  for (Query& q : dataset.queries) {
    for (DocId d = 0; d < q.num_docs(); ++d, ++i) {
      int label = 0;
      while (label < 4 && scores[i] > cuts[label]) ++label;
      q.labels[d] = label;
    }
  }
  return dataset;
}

double LinearRanker::score(std::span<const double> features) const {
  double s = 0.0;
  const std::size_t n = std::min(features.size(), weights.size());
  for (std::size_t i = 0; i < n; ++i) s += weights[i] * features[i];
  return s;
}

LinearRanker train_linear_ranker(const Dataset& dataset, int num_train_queries,
                                 double feature_fraction, RandomStream& rng,
                                 const TrainOptions& options) {
  if (feature_fraction <= 0.0 || feature_fraction > 1.0) {
    throw InvalidInputError("feature_fraction must be in (0, 1]");
  }
  if (dataset.queries.empty()) throw InvalidInputError("empty dataset");

  // Sample training queries without replacement.
  const int total = static_cast<int>(dataset.queries.size());
  const int train_count = std::min(num_train_queries, total);
  std::vector<int> pool(total);
  for (int i = 0; i < total; ++i) pool[i] = i;
  for (int i = 0; i < train_count; ++i) {
    const int j = i + rng.uniform_int(total - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(train_count);

  // Sample the feature mask: ceil(dim * fraction) usable features.
  const int dim = dataset.feature_dim;
  const int mask_size = static_cast<int>(std::ceil(dim * feature_fraction));
  std::vector<int> feats(dim);
  for (int i = 0; i < dim; ++i) feats[i] = i;
  for (int i = 0; i < mask_size; ++i) {
    const int j = i + rng.uniform_int(dim - i);
    std::swap(feats[i], feats[j]);
  }
  LinearRanker ranker;
  ranker.weights.assign(dim, 0.0);
  ranker.feature_mask.assign(dim, 0);
  for (int i = 0; i < mask_size; ++i) ranker.feature_mask[feats[i]] = 1;

  // Collect label-discordant pairs from the training queries.
  struct Pair {
    const std::vector<double>* hi;
    const std::vector<double>* lo;
  };
  std::vector<Pair> pairs;
  for (int qi : pool) {
    const Query& q = dataset.queries[qi];
    for (DocId a = 0; a < q.num_docs(); ++a) {
      for (DocId b = 0; b < q.num_docs(); ++b) {
        if (q.labels[a] > q.labels[b]) pairs.push_back({&q.features[a], &q.features[b]});
      }
    }
  }
  if (pairs.empty()) {
    throw DegenerateTrainingError("no label-discordant doc pair in the training queries");
  }

  for (int step = 0; step < options.pair_updates; ++step) {
    const Pair& p = pairs[rng.uniform_int(static_cast<int>(pairs.size()))];
    double margin = 0.0;
    for (int f = 0; f < dim; ++f) {
      if (ranker.feature_mask[f]) margin += ranker.weights[f] * ((*p.hi)[f] - (*p.lo)[f]);
    }
    if (margin < 1.0) {
      for (int f = 0; f < dim; ++f) {
        if (ranker.feature_mask[f]) {
          ranker.weights[f] += options.step * ((*p.hi)[f] - (*p.lo)[f]);
        }
      }
    }
  }
  return ranker;
}

void save_ranker(const LinearRanker& ranker, std::ostream& out) {
  out.precision(17);
  out << "dim=" << ranker.weights.size() << '\n';
  for (std::size_t i = 0; i < ranker.weights.size(); ++i) {
    if (ranker.weights[i] != 0.0) out << i << ' ' << ranker.weights[i] << '\n';
  }
}

LinearRanker load_ranker(std::istream& in) {
  std::string header;
  if (!(in >> header) || header.rfind("dim=", 0) != 0) {
    throw InvalidInputError("ranker file must start with dim=<int>");
  }
  const int dim = std::stoi(header.substr(4));
  LinearRanker ranker;
  ranker.weights.assign(dim, 0.0);
  ranker.feature_mask.assign(dim, 1);
  int index = 0;
  double value = 0.0;
  while (in >> index >> value) {
    if (index < 0 || index >= dim) throw InvalidInputError("weight index out of range");
    ranker.weights[index] = value;
  }
  return ranker;
}

}  // namespace ranklab
