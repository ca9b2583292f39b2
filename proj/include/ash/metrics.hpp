#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ash/index.hpp"

namespace ash {

// rels is the ordered 0/1 relevance of a returned list (1 = same class as
// the query); entries beyond position k are ignored.

// Relevant-in-top-k over k. Stays in [0, 1] even for short lists.
double hr_at_k(const std::vector<int>& rels, int k);
// Truncated average precision: sum of precision@i at relevant i, divided by
// norm_denominator (default: the number of relevant results retrieved).
// No relevant results gives 0.
double ap_at_k(const std::vector<int>& rels, int k, int norm_denominator = -1);
// Reciprocal rank of the first relevant result, 0 when none appears.
double rr_at_k(const std::vector<int>& rels, int k);

enum class ApNorm { RelevantRetrieved, MinKTotalRelevant };

struct QueryMetrics {
    std::uint64_t id;
    std::uint32_t label;
    double hr, ap, rr;
};

struct MetricsReport {
    int k = 0;
    std::vector<QueryMetrics> per_query;
    double mhr = 0.0, map = 0.0, mrr = 0.0;
    std::map<std::uint32_t, int> query_counts;  // queries per class
};

// Runs query_topk per query against the gallery, derives relevance from class
// labels, and aggregates arithmetic means. Query ids must be disjoint from
// gallery ids.
MetricsReport evaluate(const CodeIndex& gallery, const std::vector<HashRecord>& queries, int k,
                       ApNorm norm = ApNorm::RelevantRetrieved);

std::string report_table(const MetricsReport& report);
std::string report_keyvalues(const MetricsReport& report);
// CSV: query_id,class,hr,ap,rr
void write_report_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace ash
