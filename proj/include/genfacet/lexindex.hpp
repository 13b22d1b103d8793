#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genfacet/catalog.hpp"
#include "genfacet/text.hpp"

namespace genfacet {

struct Posting {
    std::uint32_t doc = 0;  ///< internal doc number (ascending doc-id order)
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

/// A selected facet value, e.g. (color, red).
struct FacetSelection {
    std::string name;
    std::string value;

    bool operator==(const FacetSelection&) const = default;
};

struct RankedResult {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const RankedResult&) const = default;
};

struct OkapiParams {
    double k1 = 1.2;
    double b = 0.75;
    /// Multiplier applied to '~'-prefixed (should-match) query terms.
    double soft_weight = 0.25;
};

/// Weighted query term after parsing.
struct QueryTerm {
    std::string term;
    double weight = 1.0;
};

/// Splits on whitespace; words prefixed with '~' become soft terms. Duplicate
/// terms collapse to their strongest weight, first-occurrence order kept.
std::vector<QueryTerm> parse_query(std::string_view query, double soft_weight = OkapiParams{}.soft_weight);

/// Immutable after construction.
class InvertedIndex {
public:
    InvertedIndex() = default;

    /// Generic constructor: (doc-id, text) pairs.
    static InvertedIndex from_documents(std::vector<std::pair<std::string, std::string>> docs);

    std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    double avg_doc_length() const noexcept { return avg_len_; }
    const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
    const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }
    const std::vector<Posting>* postings(const std::string& term) const;
    std::size_t document_frequency(const std::string& term) const;
    const std::unordered_map<std::string, std::vector<Posting>>& all_postings() const noexcept { return postings_; }
    /// Internal number of a doc-id, or npos.
    std::size_t doc_number(const std::string& doc_id) const;
    double idf(const std::string& term) const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    bool operator==(const InvertedIndex& o) const {
        return doc_ids_ == o.doc_ids_ && doc_lengths_ == o.doc_lengths_ && postings_ == o.postings_;
    }

    void save(const std::filesystem::path& path) const;
    static InvertedIndex load(const std::filesystem::path& path);
    std::string serialize() const;
    static InvertedIndex deserialize(const std::string& bytes);

private:
    void finish();

    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::unordered_map<std::string, std::uint32_t> doc_number_;
    double avg_len_ = 0.0;
};

/// Index over tokenize(title + category + attribute values).
InvertedIndex build_index(const Catalog& catalog);

/// Top-k by Okapi score; ties broken by ascending doc-id. Empty query -> [].
std::vector<RankedResult> search(const InvertedIndex& index, std::string_view query, std::size_t k,
                                 const OkapiParams& params = {});

/// Hard filter over the static candidate set search(query, k): keeps only
/// documents whose attrs carry every selection.
std::vector<RankedResult> boolean_filter(const InvertedIndex& index, const Catalog& catalog, std::string_view query,
                                         std::span<const FacetSelection> selections, std::size_t k);

inline std::vector<RankedResult> boolean_filter(const InvertedIndex& index, const Catalog& catalog,
                                                std::string_view query, const FacetSelection& selection,
                                                std::size_t k) {
    return boolean_filter(index, catalog, query, std::span<const FacetSelection>(&selection, 1), k);
}

}  // namespace genfacet
