#include "genfacet/lexindex.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace genfacet {

std::vector<QueryTerm> parse_query(std::string_view query, double soft_weight) {
    std::vector<QueryTerm> out;
    auto add = [&](std::string term, double w) {
        for (auto& q : out)
            if (q.term == term) {
                q.weight = std::max(q.weight, w);
                return;
            }
        out.push_back({std::move(term), w});
    };
    std::size_t i = 0;
    while (i < query.size()) {
        while (i < query.size() && std::isspace(static_cast<unsigned char>(query[i]))) ++i;
        std::size_t j = i;
        while (j < query.size() && !std::isspace(static_cast<unsigned char>(query[j]))) ++j;
        std::string_view word = query.substr(i, j - i);
        if (!word.empty()) {
            double w = 1.0;
            if (word.front() == '~') {
                w = soft_weight;
                word.remove_prefix(1);
            }
            for (auto& t : tokenize(word)) add(std::move(t), w);
        }
        i = j;
    }
    return out;
}

InvertedIndex InvertedIndex::from_documents(std::vector<std::pair<std::string, std::string>> docs) {
    std::sort(docs.begin(), docs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    InvertedIndex idx;
    idx.doc_ids_.reserve(docs.size());
    idx.doc_lengths_.reserve(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
        if (d > 0 && docs[d].first == docs[d - 1].first)
            throw std::invalid_argument("duplicate doc id: " + docs[d].first);
        auto tokens = tokenize(docs[d].second);
        idx.doc_ids_.push_back(docs[d].first);
        idx.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        std::sort(tokens.begin(), tokens.end());
        for (std::size_t i = 0; i < tokens.size();) {
            std::size_t j = i;
            while (j < tokens.size() && tokens[j] == tokens[i]) ++j;
            idx.postings_[tokens[i]].push_back({static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(j - i)});
            i = j;
        }
    }
    idx.finish();
    return idx;
}

void InvertedIndex::finish() {
    doc_number_.clear();
    doc_number_.reserve(doc_ids_.size());
    for (std::size_t d = 0; d < doc_ids_.size(); ++d) doc_number_.emplace(doc_ids_[d], static_cast<std::uint32_t>(d));
    double total = std::accumulate(doc_lengths_.begin(), doc_lengths_.end(), 0.0);
    avg_len_ = doc_ids_.empty() ? 0.0 : total / static_cast<double>(doc_ids_.size());
}

const std::vector<Posting>* InvertedIndex::postings(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

std::size_t InvertedIndex::document_frequency(const std::string& term) const {
    auto p = postings(term);
    return p ? p->size() : 0;
}

std::size_t InvertedIndex::doc_number(const std::string& doc_id) const {
    auto it = doc_number_.find(doc_id);
    return it == doc_number_.end() ? npos : it->second;
}

double InvertedIndex::idf(const std::string& term) const {
    const double n = static_cast<double>(doc_count());
    const double df = static_cast<double>(document_frequency(term));
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

InvertedIndex build_index(const Catalog& catalog) {
    std::vector<std::pair<std::string, std::string>> docs;
    docs.reserve(catalog.size());
    for (const auto& p : catalog.products()) {
        std::string text = p.title + " " + p.category;
        for (const auto& [name, value] : p.attrs) {
            text += ' ';
            text += value;
        }
        docs.emplace_back(p.id, std::move(text));
    }
    return InvertedIndex::from_documents(std::move(docs));
}

std::vector<RankedResult> search(const InvertedIndex& index, std::string_view query, std::size_t k,
                                 const OkapiParams& params) {
    if (k == 0 || index.doc_count() == 0) return {};
    auto terms = parse_query(query, params.soft_weight);
    if (terms.empty()) return {};

    const double avgdl = index.avg_doc_length();
    const auto& lengths = index.doc_lengths();
    std::vector<double> acc(index.doc_count(), 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto& qt : terms) {
        const auto* plist = index.postings(qt.term);
        if (!plist) continue;
        const double idf = index.idf(qt.term) * qt.weight;
        for (const auto& p : *plist) {
            const double tf = p.tf;
            const double norm = 1.0 - params.b + params.b * lengths[p.doc] / avgdl;
            if (acc[p.doc] == 0.0) touched.push_back(p.doc);
            acc[p.doc] += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm);
        }
    }
    // Doc numbers follow doc-id order, so comparing numbers is the id tie-break.
    auto better = [&](std::uint32_t a, std::uint32_t b) { return acc[a] != acc[b] ? acc[a] > acc[b] : a < b; };
    std::size_t take = std::min(k, touched.size());
    std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(take), touched.end(), better);
    std::vector<RankedResult> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back({index.doc_ids()[touched[i]], acc[touched[i]]});
    return out;
}

std::vector<RankedResult> boolean_filter(const InvertedIndex& index, const Catalog& catalog, std::string_view query,
                                         std::span<const FacetSelection> selections, std::size_t k) {
    auto results = search(index, query, k);
    std::erase_if(results, [&](const RankedResult& r) {
        const Product* p = catalog.find(r.doc_id);
        if (!p) return true;
        for (const auto& s : selections) {
            auto it = p->attrs.find(s.name);
            if (it == p->attrs.end() || it->second != s.value) return true;
        }
        return false;
    });
    return results;
}

// ---- binary persistence ----
// Layout (native little-endian): "GFIDX" u8 version | u64 ndocs | {str id, u32 len}* |
// u64 nterms | {str term, u64 n, {u32 doc, u32 tf}*}* with terms in sorted order.

namespace {
constexpr char kMagic[5] = {'G', 'F', 'I', 'D', 'X'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    explicit Reader(const std::string& b) : b_(b) {}
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string str() {
        auto n = get<std::uint32_t>();
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw std::runtime_error("index file truncated");
    }
    const std::string& b_;
    std::size_t pos_ = 0;
};
}  // namespace

std::string InvertedIndex::serialize() const {
    std::string out(kMagic, sizeof kMagic);
    put<std::uint8_t>(out, kVersion);
    put<std::uint64_t>(out, doc_ids_.size());
    for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
        put_str(out, doc_ids_[d]);
        put<std::uint32_t>(out, doc_lengths_[d]);
    }
    std::vector<const std::string*> terms;
    terms.reserve(postings_.size());
    for (const auto& [t, _] : postings_) terms.push_back(&t);
    std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
    put<std::uint64_t>(out, terms.size());
    for (auto* t : terms) {
        put_str(out, *t);
        const auto& pl = postings_.at(*t);
        put<std::uint64_t>(out, pl.size());
        for (const auto& p : pl) {
            put<std::uint32_t>(out, p.doc);
            put<std::uint32_t>(out, p.tf);
        }
    }
    return out;
}

InvertedIndex InvertedIndex::deserialize(const std::string& bytes) {
    if (bytes.size() < sizeof kMagic + 1 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("not an index file");
    if (static_cast<std::uint8_t>(bytes[sizeof kMagic]) != kVersion)
        throw std::runtime_error("unsupported index version " + std::to_string(int(std::uint8_t(bytes[5]))));
    Reader r(bytes);
    for (std::size_t i = 0; i < sizeof kMagic + 1; ++i) r.get<std::uint8_t>();
    InvertedIndex idx;
    auto ndocs = r.get<std::uint64_t>();
    for (std::uint64_t d = 0; d < ndocs; ++d) {
        idx.doc_ids_.push_back(r.str());
        idx.doc_lengths_.push_back(r.get<std::uint32_t>());
    }
    auto nterms = r.get<std::uint64_t>();
    for (std::uint64_t t = 0; t < nterms; ++t) {
        std::string term = r.str();
        auto n = r.get<std::uint64_t>();
        std::vector<Posting> pl;
        pl.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            Posting p;
            p.doc = r.get<std::uint32_t>();
            p.tf = r.get<std::uint32_t>();
            if (p.doc >= ndocs) throw std::runtime_error("posting references unknown doc");
            pl.push_back(p);
        }
        idx.postings_.emplace(std::move(term), std::move(pl));
    }
    if (!r.done()) throw std::runtime_error("trailing bytes in index file");
    idx.finish();
    return idx;
}

void InvertedIndex::save(const std::filesystem::path& path) const { write_text_file(path, serialize()); }

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) { return deserialize(read_text_file(path)); }

}  // namespace genfacet
