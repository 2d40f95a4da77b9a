#include "relscan/purl.hpp"

#include "relscan/util.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <variant>

namespace relscan::purl {

namespace {

bool is_unreserved(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_' || c == '~';
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

[[noreturn]] void fail(std::string_view segment, std::string_view what) {
    throw Error(ErrorKind::Parse, "purl " + std::string(segment) + ": " + std::string(what));
}

bool valid_type(std::string_view type) {
    if (type.empty() || std::isdigit(static_cast<unsigned char>(type.front()))) return false;
    return std::all_of(type.begin(), type.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '+' || c == '-';
    });
}

std::string decode_segment(std::string_view s, std::string_view segment) {
    try {
        return percent_decode(s);
    } catch (const Error& e) {
        fail(segment, e.what());
    }
}

} // namespace

std::string percent_encode(std::string_view s, std::string_view keep) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (char c : s) {
        if (is_unreserved(c) || keep.find(c) != std::string_view::npos) {
            out.push_back(c);
        } else {
            const auto u = static_cast<unsigned char>(c);
            out.push_back('%');
            out.push_back(kHex[u >> 4]);
            out.push_back(kHex[u & 0xF]);
        }
    }
    return out;
}

std::string percent_decode(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '%') {
            out.push_back(s[i]);
            continue;
        }
        const int hi = i + 1 < s.size() ? hex_value(s[i + 1]) : -1;
        const int lo = i + 2 < s.size() ? hex_value(s[i + 2]) : -1;
        if (hi < 0 || lo < 0) throw Error(ErrorKind::Parse, "malformed percent escape in '" + std::string(s) + "'");
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
    }
    return out;
}

PackageUrl parse(std::string_view text) {
    std::string_view rest = text;
    PackageUrl p;

    if (const auto hash = rest.find('#'); hash != std::string_view::npos) {
        std::string subpath;
        for (const auto& seg : util::split(rest.substr(hash + 1), '/')) {
            if (seg.empty() || seg == "." || seg == "..") continue;
            const std::string decoded = decode_segment(seg, "subpath");
            if (decoded == "." || decoded == "..") continue;
            if (!subpath.empty()) subpath.push_back('/');
            subpath += decoded;
        }
        if (!subpath.empty()) p.subpath = std::move(subpath);
        rest = rest.substr(0, hash);
    }

    if (const auto q = rest.find('?'); q != std::string_view::npos) {
        const std::string_view qs = rest.substr(q + 1);
        rest = rest.substr(0, q);
        if (!qs.empty()) {
            for (const auto& pair : util::split(qs, '&')) {
                const auto eq = pair.find('=');
                if (eq == std::string::npos || eq == 0)
                    fail("qualifiers", "malformed qualifier '" + pair + "'");
                const std::string key = util::to_lower(pair.substr(0, eq));
                if (!std::all_of(key.begin(), key.end(), [](char c) {
                        return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_';
                    }))
                    fail("qualifiers", "invalid qualifier key '" + key + "'");
                std::string value = decode_segment(std::string_view(pair).substr(eq + 1), "qualifiers");
                if (value.empty()) continue;
                if (!p.qualifiers.emplace(key, std::move(value)).second)
                    fail("qualifiers", "duplicate qualifier key '" + key + "'");
            }
        }
    }

    if (rest.size() < 4 || util::to_lower(rest.substr(0, 4)) != "pkg:") fail("scheme", "missing 'pkg:' scheme");
    rest.remove_prefix(4);
    while (!rest.empty() && rest.front() == '/') rest.remove_prefix(1);

    const auto slash = rest.find('/');
    if (slash == std::string_view::npos) fail("type", "missing type or name");
    p.ecosystem = util::to_lower(rest.substr(0, slash));
    if (!valid_type(p.ecosystem)) fail("type", "invalid type '" + p.ecosystem + "'");
    rest = rest.substr(slash + 1);
    while (!rest.empty() && rest.back() == '/') rest.remove_suffix(1);

    if (const auto at = rest.rfind('@'); at != std::string_view::npos) {
        const std::string version = decode_segment(rest.substr(at + 1), "version");
        if (version.empty()) fail("version", "empty version after '@'");
        p.version = version;
        rest = rest.substr(0, at);
    }

    std::vector<std::string> segments;
    for (const auto& seg : util::split(rest, '/')) {
        if (seg.empty()) continue;
        segments.push_back(decode_segment(seg, "namespace"));
    }
    if (segments.empty() || segments.back().empty()) fail("name", "empty name");
    p.name = segments.back();
    segments.pop_back();
    if (!segments.empty()) {
        std::string ns;
        for (const auto& seg : segments) {
            if (!ns.empty()) ns.push_back('/');
            ns += seg;
        }
        p.namespace_ = std::move(ns);
    }
    return p;
}

std::string format(const PackageUrl& p) {
    std::string out = "pkg:" + util::to_lower(p.ecosystem) + "/";
    if (p.namespace_ && !p.namespace_->empty()) {
        for (const auto& seg : util::split(*p.namespace_, '/')) {
            if (seg.empty()) continue;
            out += percent_encode(seg) + "/";
        }
    }
    out += percent_encode(p.name);
    if (p.version && !p.version->empty()) out += "@" + percent_encode(*p.version, ":");
    bool first = true;
    for (const auto& [key, value] : p.qualifiers) {
        if (value.empty()) continue;
        out += first ? "?" : "&";
        first = false;
        out += util::to_lower(key) + "=" + percent_encode(value, ":/");
    }
    if (p.subpath && !p.subpath->empty()) {
        std::string sub;
        for (const auto& seg : util::split(*p.subpath, '/')) {
            if (seg.empty() || seg == "." || seg == "..") continue;
            if (!sub.empty()) sub.push_back('/');
            sub += percent_encode(seg);
        }
        if (!sub.empty()) out += "#" + sub;
    }
    return out;
}

std::string product_key(std::string_view ecosystem, std::string_view namespace_, std::string_view name) {
    std::string key = util::to_lower(ecosystem) + ":";
    if (!namespace_.empty()) key += util::to_lower(namespace_) + "/";
    key += util::to_lower(name);
    return key;
}

std::string product_key(const PackageUrl& p) {
    return product_key(p.ecosystem, p.namespace_.value_or(""), p.name);
}

std::string_view to_string(Ordering o) {
    switch (o) {
    case Ordering::Less: return "LT";
    case Ordering::Equal: return "EQ";
    case Ordering::Greater: return "GT";
    }
    return "?";
}

VersionScheme scheme_for(std::string_view ecosystem) {
    const std::string eco = util::to_lower(ecosystem);
    if (eco == "cargo" || eco == "golang" || eco == "npm") return VersionScheme::Semver;
    if (eco == "maven") return VersionScheme::Maven;
    if (eco == "pypi") return VersionScheme::Pypi;
    if (eco == "gem") return VersionScheme::Alnum;
    if (eco == "composer") return VersionScheme::Composer;
    return VersionScheme::Fallback;
}

// ---------------------------------------------------------------------------
// Version ordering

namespace {

int sign(int v) { return v < 0 ? -1 : (v > 0 ? 1 : 0); }

std::string_view strip_zeros(std::string_view digits) {
    std::size_t i = 0;
    while (i + 1 < digits.size() && digits[i] == '0') ++i;
    return digits.substr(i);
}

/// Compares two non-negative decimal digit strings of any length.
int cmp_numeric(std::string_view a, std::string_view b) {
    a = strip_zeros(a);
    b = strip_zeros(b);
    if (a.size() != b.size()) return a.size() < b.size() ? -1 : 1;
    return sign(a.compare(b));
}

int cmp_string(std::string_view a, std::string_view b) { return sign(a.compare(b)); }

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

/// Alternating digit / letter runs; every other character separates.
std::vector<std::string> tokenize_alnum(std::string_view s) {
    std::vector<std::string> tokens;
    std::string cur;
    int kind = 0; // 1 digit, 2 alpha
    for (char c : s) {
        const int k = std::isdigit(static_cast<unsigned char>(c)) ? 1 : (std::isalpha(static_cast<unsigned char>(c)) ? 2 : 0);
        if (k != kind && !cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
        kind = k;
        if (k != 0) cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// Fallback: numbers outrank words, shorter sequence is less when it is a prefix.
int compare_fallback(std::string_view a, std::string_view b) {
    const auto ta = tokenize_alnum(a);
    const auto tb = tokenize_alnum(b);
    const std::size_t n = std::min(ta.size(), tb.size());
    for (std::size_t i = 0; i < n; ++i) {
        const bool da = all_digits(ta[i]), db = all_digits(tb[i]);
        int c = 0;
        if (da && db)
            c = cmp_numeric(ta[i], tb[i]);
        else if (da != db)
            c = da ? 1 : -1;
        else
            c = cmp_string(ta[i], tb[i]);
        if (c != 0) return c;
    }
    if (ta.size() != tb.size()) return ta.size() < tb.size() ? -1 : 1;
    return 0;
}

// --- semver ---------------------------------------------------------------

struct SemverKey {
    std::vector<std::string> core;
    std::vector<std::string> pre;
    bool has_pre = false;
};

std::optional<SemverKey> parse_semver(std::string_view v) {
    if (const auto plus = v.find('+'); plus != std::string_view::npos) v = v.substr(0, plus);
    SemverKey key;
    std::string_view core = v;
    if (const auto dash = v.find('-'); dash != std::string_view::npos) {
        core = v.substr(0, dash);
        key.has_pre = true;
        for (const auto& id : util::split(v.substr(dash + 1), '.')) {
            if (id.empty()) return std::nullopt;
            key.pre.push_back(id);
        }
    }
    for (const auto& part : util::split(core, '.')) {
        if (!all_digits(part)) return std::nullopt;
        key.core.push_back(part);
    }
    if (key.core.empty() || key.core.size() > 4) return std::nullopt;
    while (key.core.size() < 3) key.core.emplace_back("0");
    return key;
}

int compare_pre_ids(std::string_view a, std::string_view b) {
    const bool da = all_digits(a), db = all_digits(b);
    if (da && db) return cmp_numeric(a, b);
    if (da != db) return da ? -1 : 1;
    return cmp_string(a, b);
}

int compare_semver(std::string_view ecosystem, std::string_view a, std::string_view b) {
    if (util::to_lower(ecosystem) == "golang") {
        if (!a.empty() && a.front() == 'v') a.remove_prefix(1);
        if (!b.empty() && b.front() == 'v') b.remove_prefix(1);
    }
    const auto ka = parse_semver(a);
    const auto kb = parse_semver(b);
    if (!ka || !kb) {
        if (!ka && !kb) return compare_fallback(a, b);
        return ka ? 1 : -1;
    }
    const std::size_t n = std::max(ka->core.size(), kb->core.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::string_view x = i < ka->core.size() ? std::string_view(ka->core[i]) : "0";
        const std::string_view y = i < kb->core.size() ? std::string_view(kb->core[i]) : "0";
        if (const int c = cmp_numeric(x, y)) return c;
    }
    if (ka->has_pre != kb->has_pre) return ka->has_pre ? -1 : 1;
    const std::size_t m = std::min(ka->pre.size(), kb->pre.size());
    for (std::size_t i = 0; i < m; ++i)
        if (const int c = compare_pre_ids(ka->pre[i], kb->pre[i])) return c;
    if (ka->pre.size() != kb->pre.size()) return ka->pre.size() < kb->pre.size() ? -1 : 1;
    return 0;
}

// --- maven (ComparableVersion semantics) -----------------------------------

struct MavenItem;
using MavenList = std::vector<MavenItem>;

struct MavenItem {
    enum class Kind { Int, String, List } kind;
    std::string value; // Int: digits without leading zeros; String: comparable qualifier
    MavenList list;

    bool is_null() const {
        switch (kind) {
        case Kind::Int: return value == "0";
        case Kind::String: return value == "5"; // release qualifier index
        case Kind::List: return list.empty();
        }
        return false;
    }
};

std::string maven_comparable_qualifier(std::string q) {
    static const std::vector<std::string> kQualifiers = {"alpha", "beta", "milestone", "rc", "snapshot", "", "sp"};
    const auto it = std::find(kQualifiers.begin(), kQualifiers.end(), q);
    if (it != kQualifiers.end()) return std::to_string(it - kQualifiers.begin());
    return std::to_string(kQualifiers.size()) + "-" + q;
}

MavenItem maven_string_item(std::string value, bool followed_by_digit) {
    if (followed_by_digit && value.size() == 1) {
        if (value == "a") value = "alpha";
        else if (value == "b") value = "beta";
        else if (value == "m") value = "milestone";
    }
    if (value == "ga" || value == "final" || value == "release") value = "";
    else if (value == "cr") value = "rc";
    return MavenItem{MavenItem::Kind::String, maven_comparable_qualifier(value), {}};
}

MavenItem maven_parse_item(bool is_digit, const std::string& buf) {
    if (is_digit) return MavenItem{MavenItem::Kind::Int, std::string(strip_zeros(buf)), {}};
    return maven_string_item(buf, false);
}

void maven_normalize(MavenList& list) {
    for (std::size_t i = list.size(); i-- > 0;) {
        if (list[i].is_null())
            list.erase(list.begin() + static_cast<std::ptrdiff_t>(i));
        else if (list[i].kind != MavenItem::Kind::List)
            break;
    }
}

MavenList maven_parse(std::string_view version_in) {
    const std::string version = util::to_lower(version_in);
    // Lists are built through a stack of paths into the root, since nested
    // vectors may reallocate while children are appended.
    MavenList root;
    std::vector<std::vector<std::size_t>> stack{{}};
    auto current = [&]() -> MavenList& {
        MavenList* l = &root;
        for (std::size_t idx : stack.back()) l = &(*l)[idx].list;
        return *l;
    };
    auto push_list = [&]() {
        MavenList& cur = current();
        cur.push_back(MavenItem{MavenItem::Kind::List, {}, {}});
        auto path = stack.back();
        path.push_back(cur.size() - 1);
        stack.push_back(std::move(path));
    };

    bool is_digit = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i < version.size(); ++i) {
        const char c = version[i];
        if (c == '.') {
            if (i == start)
                current().push_back(MavenItem{MavenItem::Kind::Int, "0", {}});
            else
                current().push_back(maven_parse_item(is_digit, version.substr(start, i - start)));
            start = i + 1;
        } else if (c == '-') {
            if (i == start)
                current().push_back(MavenItem{MavenItem::Kind::Int, "0", {}});
            else
                current().push_back(maven_parse_item(is_digit, version.substr(start, i - start)));
            start = i + 1;
            push_list();
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            if (!is_digit && i > start) {
                current().push_back(maven_string_item(version.substr(start, i - start), true));
                start = i;
                push_list();
            }
            is_digit = true;
        } else {
            if (is_digit && i > start) {
                current().push_back(maven_parse_item(true, version.substr(start, i - start)));
                start = i;
                push_list();
            }
            is_digit = false;
        }
    }
    if (version.size() > start) current().push_back(maven_parse_item(is_digit, version.substr(start)));
    while (!stack.empty()) {
        maven_normalize(current());
        stack.pop_back();
    }
    return root;
}

int maven_compare(const MavenItem* a, const MavenItem* b);

int maven_compare_lists(const MavenList& a, const MavenList& b) {
    const std::size_t n = std::max(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        const MavenItem* l = i < a.size() ? &a[i] : nullptr;
        const MavenItem* r = i < b.size() ? &b[i] : nullptr;
        int result = 0;
        if (l == nullptr)
            result = r == nullptr ? 0 : -maven_compare(r, nullptr);
        else
            result = maven_compare(l, r);
        if (result != 0) return result;
    }
    return 0;
}

// a is never null; b may be.
int maven_compare(const MavenItem* a, const MavenItem* b) {
    using K = MavenItem::Kind;
    switch (a->kind) {
    case K::Int:
        if (!b) return a->value == "0" ? 0 : 1;
        if (b->kind == K::Int) return cmp_numeric(a->value, b->value);
        return 1;
    case K::String:
        if (!b) return cmp_string(a->value, "5");
        if (b->kind == K::Int || b->kind == K::List) return -1;
        return cmp_string(a->value, b->value);
    case K::List:
        if (!b) {
            if (a->list.empty()) return 0;
            return maven_compare(&a->list.front(), nullptr);
        }
        if (b->kind == K::Int) return -1;
        if (b->kind == K::String) return 1;
        return maven_compare_lists(a->list, b->list);
    }
    return 0;
}

int compare_maven(std::string_view a, std::string_view b) {
    return maven_compare_lists(maven_parse(a), maven_parse(b));
}

// --- pypi (normalized public + local versions) ----------------------------

struct PypiKey {
    std::string epoch = "0";
    std::vector<std::string> release;
    // pre: rank -1 means "before any pre" (dev-only), 3 means "no pre" (after all)
    int pre_rank = 3;
    std::string pre_num = "0";
    bool has_post = false;
    std::string post_num = "0";
    bool has_dev = false;
    std::string dev_num = "0";
    std::vector<std::string> local;
};

std::optional<PypiKey> parse_pypi(std::string_view text) {
    static const std::regex kPattern(
        R"(^\s*v?(?:([0-9]+)!)?([0-9]+(?:\.[0-9]+)*))"
        R"((?:[-_.]?(alpha|a|beta|b|preview|pre|c|rc)[-_.]?([0-9]+)?)?)"
        R"((?:-([0-9]+)|[-_.]?(post|rev|r)[-_.]?([0-9]+)?)?)"
        R"((?:[-_.]?(dev)[-_.]?([0-9]+)?)?)"
        R"((?:\+([a-z0-9]+(?:[-_.][a-z0-9]+)*))?\s*$)",
        std::regex::icase | std::regex::optimize);
    const std::string lowered = util::to_lower(text);
    std::smatch m;
    if (!std::regex_match(lowered, m, kPattern)) return std::nullopt;
    PypiKey key;
    if (m[1].matched) key.epoch = std::string(strip_zeros(m[1].str()));
    for (const auto& part : util::split(m[2].str(), '.')) key.release.emplace_back(strip_zeros(part));
    while (key.release.size() > 1 && key.release.back() == "0") key.release.pop_back();
    if (m[3].matched) {
        const std::string l = m[3].str();
        key.pre_rank = (l == "a" || l == "alpha") ? 0 : (l == "b" || l == "beta") ? 1 : 2;
        key.pre_num = m[4].matched ? std::string(strip_zeros(m[4].str())) : "0";
    }
    if (m[5].matched) {
        key.has_post = true;
        key.post_num = std::string(strip_zeros(m[5].str()));
    } else if (m[6].matched) {
        key.has_post = true;
        key.post_num = m[7].matched ? std::string(strip_zeros(m[7].str())) : "0";
    }
    if (m[8].matched) {
        key.has_dev = true;
        key.dev_num = m[9].matched ? std::string(strip_zeros(m[9].str())) : "0";
    }
    if (m[10].matched) {
        for (const auto& seg : util::split(m[10].str(), '.')) {
            for (const auto& sub : util::split(seg, '-'))
                for (const auto& s : util::split(sub, '_')) key.local.push_back(s);
        }
    }
    // Dev release of a final release sorts before its pre-releases.
    if (key.pre_rank == 3 && !key.has_post && key.has_dev) key.pre_rank = -1;
    return key;
}

int compare_pypi(std::string_view a, std::string_view b) {
    const auto ka = parse_pypi(a);
    const auto kb = parse_pypi(b);
    if (!ka || !kb) {
        if (!ka && !kb) return compare_fallback(a, b);
        return ka ? 1 : -1;
    }
    if (const int c = cmp_numeric(ka->epoch, kb->epoch)) return c;
    const std::size_t n = std::max(ka->release.size(), kb->release.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::string_view x = i < ka->release.size() ? std::string_view(ka->release[i]) : "0";
        const std::string_view y = i < kb->release.size() ? std::string_view(kb->release[i]) : "0";
        if (const int c = cmp_numeric(x, y)) return c;
    }
    if (ka->pre_rank != kb->pre_rank) return ka->pre_rank < kb->pre_rank ? -1 : 1;
    if (ka->pre_rank >= 0 && ka->pre_rank <= 2)
        if (const int c = cmp_numeric(ka->pre_num, kb->pre_num)) return c;
    if (ka->has_post != kb->has_post) return ka->has_post ? 1 : -1;
    if (ka->has_post)
        if (const int c = cmp_numeric(ka->post_num, kb->post_num)) return c;
    if (ka->has_dev != kb->has_dev) return ka->has_dev ? -1 : 1;
    if (ka->has_dev)
        if (const int c = cmp_numeric(ka->dev_num, kb->dev_num)) return c;
    // Local segments: numbers outrank words; shorter is less.
    const std::size_t m = std::min(ka->local.size(), kb->local.size());
    for (std::size_t i = 0; i < m; ++i) {
        const bool da = all_digits(ka->local[i]), db = all_digits(kb->local[i]);
        int c = 0;
        if (da && db)
            c = cmp_numeric(ka->local[i], kb->local[i]);
        else if (da != db)
            c = da ? 1 : -1;
        else
            c = cmp_string(ka->local[i], kb->local[i]);
        if (c) return c;
    }
    if (ka->local.size() != kb->local.size()) return ka->local.size() < kb->local.size() ? -1 : 1;
    return 0;
}

// --- gem / composer: dotted alphanumeric, padded with numeric zero --------

struct AlnumAtom {
    int rank;          // class rank; numbers share one rank
    std::string value; // digits for numbers, word for ranked-by-value words
};

int composer_word_rank(const std::string& w, std::string& value) {
    // unknown < dev < alpha < beta < rc < number < patch
    value.clear();
    if (w == "dev") return 1;
    if (w == "alpha" || w == "a") return 2;
    if (w == "beta" || w == "b") return 3;
    if (w == "rc") return 4;
    if (w == "pl" || w == "p" || w == "patch") return 6;
    value = w;
    return 0;
}

constexpr int kNumberRank = 5;

std::vector<AlnumAtom> alnum_atoms(std::string_view v, bool composer) {
    if (!v.empty() && (v.front() == 'v' || v.front() == 'V') && v.size() > 1 &&
        std::isdigit(static_cast<unsigned char>(v[1])))
        v.remove_prefix(1);
    std::vector<AlnumAtom> atoms;
    for (auto& tok : tokenize_alnum(v)) {
        if (all_digits(tok)) {
            atoms.push_back({kNumberRank, std::string(strip_zeros(tok))});
        } else if (composer) {
            std::string value;
            const int rank = composer_word_rank(tok, value);
            atoms.push_back({rank, value});
        } else {
            atoms.push_back({0, tok});
        }
    }
    return atoms;
}

int compare_atom(const AlnumAtom& a, const AlnumAtom& b) {
    if (a.rank != b.rank) return a.rank < b.rank ? -1 : 1;
    if (a.rank == kNumberRank) return cmp_numeric(a.value, b.value);
    return cmp_string(a.value, b.value);
}

int compare_alnum(std::string_view a, std::string_view b, bool composer) {
    const auto xa = alnum_atoms(a, composer);
    const auto xb = alnum_atoms(b, composer);
    const AlnumAtom zero{kNumberRank, "0"};
    const std::size_t n = std::max(xa.size(), xb.size());
    for (std::size_t i = 0; i < n; ++i) {
        const AlnumAtom& x = i < xa.size() ? xa[i] : zero;
        const AlnumAtom& y = i < xb.size() ? xb[i] : zero;
        if (const int c = compare_atom(x, y)) return c;
    }
    return 0;
}

Ordering to_ordering(int c) { return c < 0 ? Ordering::Less : (c > 0 ? Ordering::Greater : Ordering::Equal); }

} // namespace

Ordering compare_versions(std::string_view ecosystem, std::string_view a, std::string_view b) {
    switch (scheme_for(ecosystem)) {
    case VersionScheme::Semver: return to_ordering(compare_semver(ecosystem, a, b));
    case VersionScheme::Maven: return to_ordering(compare_maven(a, b));
    case VersionScheme::Pypi: return to_ordering(compare_pypi(a, b));
    case VersionScheme::Alnum: return to_ordering(compare_alnum(a, b, false));
    case VersionScheme::Composer: return to_ordering(compare_alnum(a, b, true));
    case VersionScheme::Fallback: return to_ordering(compare_fallback(a, b));
    }
    return Ordering::Equal;
}

bool version_in_range(std::string_view ecosystem, std::string_view version, const VersionRange& range) {
    if (!range.exact.empty()) {
        return std::any_of(range.exact.begin(), range.exact.end(), [&](const std::string& e) {
            return compare_versions(ecosystem, version, e) == Ordering::Equal;
        });
    }
    if (range.start) {
        const Ordering o = compare_versions(ecosystem, version, range.start->version);
        if (o == Ordering::Less || (o == Ordering::Equal && !range.start->inclusive)) return false;
    }
    if (range.end) {
        const Ordering o = compare_versions(ecosystem, version, range.end->version);
        if (o == Ordering::Greater || (o == Ordering::Equal && !range.end->inclusive)) return false;
    }
    return true;
}

void validate_range(std::string_view ecosystem, const VersionRange& range) {
    if (!range.exact.empty() && (range.start || range.end))
        throw Error(ErrorKind::Validation, "version range mixes an exact list with bounds");
    if ((range.start && range.start->version.empty()) || (range.end && range.end->version.empty()))
        throw Error(ErrorKind::Validation, "version range bound is empty");
    if (range.start && range.end &&
        compare_versions(ecosystem, range.start->version, range.end->version) == Ordering::Greater)
        throw Error(ErrorKind::Validation,
                    "version range start " + range.start->version + " exceeds end " + range.end->version);
}

} // namespace relscan::purl
