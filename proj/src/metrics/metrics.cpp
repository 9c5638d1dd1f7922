// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

#include "echomoe/errors.hpp"

namespace echomoe::metrics {
namespace {

std::size_t clipped_overlap(const Tokens& candidate, const Tokens& reference) {
  std::unordered_map<std::string, std::size_t> ref_counts;
  for (const auto& t : reference) ++ref_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : candidate) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  return overlap;
}

// Depth-first search over alignments that keep the match count maximal.
class MeteorSearch {
 public:
  MeteorSearch(const Tokens& cand, const Tokens& ref) : cand_(cand), ref_(ref) {
    std::unordered_map<std::string, std::size_t> cand_count, ref_count;
    for (const auto& t : cand) ++cand_count[t];
    for (const auto& t : ref) ++ref_count[t];
    for (const auto& [w, n] : cand_count) {
      auto it = ref_count.find(w);
      quota_[w] = it == ref_count.end() ? 0 : std::min(n, it->second);
      remaining_[w] = n;
      matches_ += quota_[w];
    }
    for (std::size_t j = 0; j < ref.size(); ++j) positions_[ref[j]].push_back(j);
    used_.assign(ref.size(), false);
  }

  MeteorAlignment run() {
    if (matches_ == 0) return {0, 0};
    best_chunks_ = matches_ + 1;
    visit(0, kNone, 0);
    return {matches_, best_chunks_};
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  static constexpr std::size_t kBudget = 200000;

  void visit(std::size_t i, std::size_t prev, std::size_t chunks) {
    if (chunks >= best_chunks_) return;
    if (i == cand_.size()) {
      best_chunks_ = chunks;
      return;
    }
    if (++nodes_ > kBudget && best_chunks_ <= matches_) return;
    const std::string& w = cand_[i];
    std::size_t& quota = quota_[w];
    std::size_t& remaining = remaining_[w];
    --remaining;
    if (quota > 0) {
      const auto& pos = positions_[w];
      // Extending the current chunk first finds good alignments early.
      std::vector<std::size_t> order;
      if (prev != kNone && prev + 1 < ref_.size() && !used_[prev + 1] && ref_[prev + 1] == w) {
        order.push_back(prev + 1);
      }
      for (std::size_t j : pos) {
        if (!used_[j] && (order.empty() || j != order[0])) order.push_back(j);
      }
      for (std::size_t j : order) {
        used_[j] = true;
        --quota;
        const bool extends = prev != kNone && j == prev + 1;
        visit(i + 1, j, chunks + (extends ? 0 : 1));
        ++quota;
        used_[j] = false;
      }
    }
    // Leaving this occurrence unaligned is allowed only if later occurrences
    // can still fill the quota.
    if (remaining >= quota) visit(i + 1, kNone, chunks);
    ++remaining;
  }

  const Tokens& cand_;
  const Tokens& ref_;
  std::unordered_map<std::string, std::size_t> quota_, remaining_;
  std::unordered_map<std::string, std::vector<std::size_t>> positions_;
  std::vector<bool> used_;
  std::size_t matches_ = 0;
  std::size_t best_chunks_ = 0;
  std::size_t nodes_ = 0;
};

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::size_t clipped_unigram_matches(const Tokens& candidate, const Tokens& reference) {
  return clipped_overlap(candidate, reference);
}

double bleu1(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty()) return 0.0;
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double precision = static_cast<double>(clipped_overlap(candidate, reference)) / c;
  const double bp = std::min(1.0, std::exp(1.0 - r / c));
  return precision * bp;
}

double rouge1(const Tokens& candidate, const Tokens& reference) {
  const std::size_t overlap = clipped_overlap(candidate, reference);
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double rougeL(const Tokens& candidate, const Tokens& reference) {
  return textpipe::rouge_l_sim(candidate, reference);
}

MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference) {
  return MeteorSearch(candidate, reference).run();
}

double meteor_exact(const Tokens& candidate, const Tokens& reference) {
  const MeteorAlignment a = meteor_align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

Report evaluate_corpus(std::span<const EvalPair> pairs, std::span<const std::string> expected_tags) {
  if (pairs.empty()) throw ContractError("evaluate_corpus: no pairs");
  std::map<std::string, ReportRow> by_tag;
  for (const auto& tag : expected_tags) by_tag[tag].tag = tag;
  for (const auto& p : pairs) {
    ReportRow& row = by_tag[p.tag];
    row.tag = p.tag;
    ++row.pairs;
    row.bleu1 += bleu1(p.candidate, p.reference);
    row.rouge1 += rouge1(p.candidate, p.reference);
    row.rougeL += rougeL(p.candidate, p.reference);
    row.meteor += meteor_exact(p.candidate, p.reference);
  }
  Report report;
  ReportRow avg;
  avg.tag = kAverageTag;
  std::size_t groups = 0;
  for (auto& [tag, row] : by_tag) {
    if (row.pairs == 0) {
      row.warning = "no pairs for tag";
      report.rows.push_back(row);
      continue;
    }
    const double scale = 100.0 / static_cast<double>(row.pairs);
    row.bleu1 *= scale;
    row.rouge1 *= scale;
    row.rougeL *= scale;
    row.meteor *= scale;
    avg.pairs += row.pairs;
    avg.bleu1 += row.bleu1;
    avg.rouge1 += row.rouge1;
    avg.rougeL += row.rougeL;
    avg.meteor += row.meteor;
    ++groups;
    report.rows.push_back(row);
  }
  const double g = static_cast<double>(groups);
  avg.bleu1 /= g;
  avg.rouge1 /= g;
  avg.rougeL /= g;
  avg.meteor /= g;
  report.rows.push_back(avg);
  return report;
}

void write_csv(std::ostream& out, const Report& report) {
  out << "tag,pairs,BLEU-1,ROUGE-1,ROUGE-L,METEOR,warning\n";
  for (const auto& r : report.rows) {
    out << r.tag << ',' << r.pairs << ',';
    if (r.warning.empty()) {
      out << fixed(r.bleu1) << ',' << fixed(r.rouge1) << ',' << fixed(r.rougeL) << ','
          << fixed(r.meteor) << ",\n";
    } else {
      out << ",,,," << r.warning << '\n';
    }
  }
}

void write_table(std::ostream& out, const Report& report) {
  std::size_t tag_width = 3;
  for (const auto& r : report.rows) tag_width = std::max(tag_width, r.tag.size());
  auto pad = [](const std::string& s, std::size_t w, bool left) {
    const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
    return left ? s + fill : fill + s;
  };
  const char* names[] = {"BLEU-1", "ROUGE-1", "ROUGE-L", "METEOR"};
  out << pad("Tag", tag_width, true) << "  " << pad("Pairs", 5, false);
  for (const char* n : names) out << "  " << pad(n, 7, false);
  out << '\n';
  for (const auto& r : report.rows) {
    out << pad(r.tag, tag_width, true) << "  " << pad(std::to_string(r.pairs), 5, false);
    if (!r.warning.empty()) {
      out << "  warning: " << r.warning << '\n';
      continue;
    }
    for (double v : {r.bleu1, r.rouge1, r.rougeL, r.meteor}) out << "  " << pad(fixed(v), 7, false);
    out << '\n';
  }
}

}  // namespace echomoe::metrics
