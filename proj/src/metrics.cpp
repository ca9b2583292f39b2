#include "ash/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ash {

namespace {

std::size_t clipped_len(const std::vector<int>& rels, int k) {
    return std::min<std::size_t>(rels.size(), static_cast<std::size_t>(k));
}

}  // namespace

double hr_at_k(const std::vector<int>& rels, int k) {
    if (k < 1) throw ContractError("k must be >= 1");
    const std::size_t len = clipped_len(rels, k);
    int hits = 0;
    for (std::size_t i = 0; i < len; ++i) hits += rels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(k);
}

double ap_at_k(const std::vector<int>& rels, int k, int norm_denominator) {
    if (k < 1) throw ContractError("k must be >= 1");
    const std::size_t len = clipped_len(rels, k);
    int hits = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        if (rels[i]) {
            ++hits;
            acc += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    const int denom = norm_denominator > 0 ? norm_denominator : hits;
    return denom > 0 ? acc / static_cast<double>(denom) : 0.0;
}

double rr_at_k(const std::vector<int>& rels, int k) {
    if (k < 1) throw ContractError("k must be >= 1");
    const std::size_t len = clipped_len(rels, k);
    for (std::size_t i = 0; i < len; ++i) {
        if (rels[i]) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

MetricsReport evaluate(const CodeIndex& gallery, const std::vector<HashRecord>& queries, int k,
                       ApNorm norm) {
    if (queries.empty()) throw DataError("query set is empty");
    if (k < 1) throw ContractError("k must be >= 1");
    for (const auto& q : queries) {
        if (gallery.contains(q.id)) {
            throw DataError("query id " + std::to_string(q.id) + " also appears in the gallery");
        }
    }

    std::map<std::uint32_t, int> gallery_class_counts;
    for (const auto& r : gallery.records()) ++gallery_class_counts[r.label];

    MetricsReport report;
    report.k = k;
    report.per_query.reserve(queries.size());
    for (const auto& q : queries) {
        const auto results = gallery.query_topk(q, k);
        std::vector<int> rels;
        rels.reserve(results.size());
        for (const auto& [id, dist] : results) {
            rels.push_back(gallery.label_of(id) == q.label ? 1 : 0);
        }
        int denom = -1;
        if (norm == ApNorm::MinKTotalRelevant) {
            const auto it = gallery_class_counts.find(q.label);
            const int total = it == gallery_class_counts.end() ? 0 : it->second;
            denom = std::min(k, total);
            if (denom == 0) denom = -1;  // no relevant items at all: fall back to 0-by-rule
        }
        QueryMetrics qm;
        qm.id = q.id;
        qm.label = q.label;
        qm.hr = hr_at_k(rels, k);
        qm.ap = ap_at_k(rels, k, denom);
        qm.rr = rr_at_k(rels, k);
        report.per_query.push_back(qm);
        ++report.query_counts[q.label];

        report.mhr += qm.hr;
        report.map += qm.ap;
        report.mrr += qm.rr;
    }
    const double n = static_cast<double>(report.per_query.size());
    report.mhr /= n;
    report.map /= n;
    report.mrr /= n;
    return report;
}

std::string report_table(const MetricsReport& report) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "k = " << report.k << ", queries = " << report.per_query.size() << "\n";
    os << std::left << std::setw(10) << "class" << std::right << std::setw(10) << "queries"
       << "\n";
    for (const auto& [label, count] : report.query_counts) {
        os << std::left << std::setw(10) << label << std::right << std::setw(10) << count << "\n";
    }
    os << std::left << std::setw(8) << "metric" << std::right << std::setw(10) << "mean"
       << "\n";
    os << std::left << std::setw(8) << "mHR" << std::right << std::setw(10) << report.mhr << "\n";
    os << std::left << std::setw(8) << "mAP" << std::right << std::setw(10) << report.map << "\n";
    os << std::left << std::setw(8) << "mRR" << std::right << std::setw(10) << report.mrr << "\n";
    return os.str();
}

std::string report_keyvalues(const MetricsReport& report) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "k = " << report.k << "\n";
    os << "queries = " << report.per_query.size() << "\n";
    os << "mhr = " << report.mhr << "\n";
    os << "map = " << report.map << "\n";
    os << "mrr = " << report.mrr << "\n";
    return os.str();
}

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write report csv: " + path.string());
    os << "query_id,class,hr,ap,rr\n";
    os << std::setprecision(12);
    for (const auto& q : report.per_query) {
        os << q.id << ',' << q.label << ',' << q.hr << ',' << q.ap << ',' << q.rr << '\n';
    }
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace ash
