#include "oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace relscan::testing {

namespace {

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& items) {
    return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
bool chance(std::mt19937_64& rng, double p) { return std::bernoulli_distribution(p)(rng); }

int cmp(long long a, long long b) { return a < b ? -1 : (a > b ? 1 : 0); }
int cmps(const std::string& a, const std::string& b) { return a < b ? -1 : (a > b ? 1 : 0); }

std::string join_numbers(const std::vector<long long>& nums, const std::string& sep = ".") {
    std::string out;
    for (std::size_t i = 0; i < nums.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(nums[i]);
    }
    return out;
}

std::string random_case(std::mt19937_64& rng, std::string s) {
    if (chance(rng, 0.2))
        for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

enum class Family { Semver, Maven, Pypi, Gem, Composer, Generic };

Family family_of(const std::string& eco) {
    if (eco == "cargo" || eco == "npm" || eco == "golang") return Family::Semver;
    if (eco == "maven") return Family::Maven;
    if (eco == "pypi") return Family::Pypi;
    if (eco == "gem") return Family::Gem;
    if (eco == "composer") return Family::Composer;
    return Family::Generic;
}

// -- semver ------------------------------------------------------------------

GeneratedVersion gen_semver(const std::string& eco, std::mt19937_64& rng) {
    GeneratedVersion v;
    for (int i = 0; i < 3; ++i) v.numbers.push_back(uniform(rng, 0, 4));
    v.text = join_numbers(v.numbers);
    if (chance(rng, 0.4)) {
        v.has_pre = true;
        const int n = uniform(rng, 1, 3);
        static const std::vector<std::string> words = {"alpha", "beta", "rc", "x", "a1", "pre-b"};
        std::string pre;
        for (int i = 0; i < n; ++i) {
            if (chance(rng, 0.5)) v.pre_ids.emplace_back(true, std::to_string(uniform(rng, 0, 11)));
            else v.pre_ids.emplace_back(false, pick(rng, words));
            if (i) pre += ".";
            pre += v.pre_ids.back().second;
        }
        v.text += "-" + pre;
    }
    if (chance(rng, 0.15)) v.text += "+build." + std::to_string(uniform(rng, 0, 9));
    if (eco == "golang") v.text = "v" + v.text;
    return v;
}

int cmp_semver(const GeneratedVersion& a, const GeneratedVersion& b) {
    for (std::size_t i = 0; i < 3; ++i)
        if (int c = cmp(a.numbers[i], b.numbers[i])) return c;
    if (a.has_pre != b.has_pre) return a.has_pre ? -1 : 1;
    const std::size_t n = std::min(a.pre_ids.size(), b.pre_ids.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [an, av] = a.pre_ids[i];
        const auto& [bn, bv] = b.pre_ids[i];
        if (an && bn) {
            if (int c = cmp(std::stoll(av), std::stoll(bv))) return c;
        } else if (an != bn) {
            return an ? -1 : 1;
        } else if (int c = cmps(av, bv)) {
            return c;
        }
    }
    return cmp(static_cast<long long>(a.pre_ids.size()), static_cast<long long>(b.pre_ids.size()));
}

// -- maven -------------------------------------------------------------------
// Qualifier ranks: alpha 0, beta 1, milestone 2, rc 3, snapshot 4, release 5, sp 6.

GeneratedVersion gen_maven(std::mt19937_64& rng) {
    GeneratedVersion v;
    const int n = uniform(rng, 1, 4);
    for (int i = 0; i < n; ++i) v.numbers.push_back(uniform(rng, 0, 3));
    v.text = join_numbers(v.numbers);
    v.qualifier_rank = uniform(rng, 0, 6);
    if (v.qualifier_rank == 5) {
        static const std::vector<std::string> release = {"", "", "-ga", "-final", "-release"};
        v.text += random_case(rng, pick(rng, release));
        return v;
    }
    v.qualifier_number = chance(rng, 0.5) ? uniform(rng, 0, 3) : 0;
    std::vector<std::string> spellings;
    switch (v.qualifier_rank) {
    case 0: spellings = {"alpha"}; break;
    case 1: spellings = {"beta"}; break;
    case 2: spellings = {"milestone"}; break;
    case 3: spellings = {"rc", "cr"}; break;
    case 4: spellings = {"snapshot"}; break;
    default: spellings = {"sp"}; break;
    }
    std::string word = pick(rng, spellings);
    // Single-letter shorthands only count when a digit follows.
    const bool digit_follows = v.qualifier_number > 0 || chance(rng, 0.3);
    if (digit_follows && chance(rng, 0.4)) {
        if (v.qualifier_rank == 0) word = "a";
        if (v.qualifier_rank == 1) word = "b";
        if (v.qualifier_rank == 2) word = "m";
    }
    v.text += "-" + random_case(rng, word);
    if (digit_follows) v.text += (word.size() > 1 && chance(rng, 0.5) ? "-" : "") + std::to_string(v.qualifier_number);
    return v;
}

int cmp_maven(const GeneratedVersion& a, const GeneratedVersion& b) {
    auto trimmed = [](std::vector<long long> n) {
        while (!n.empty() && n.back() == 0) n.pop_back();
        return n;
    };
    const auto na = trimmed(a.numbers), nb = trimmed(b.numbers);
    const std::size_t n = std::max(na.size(), nb.size());
    for (std::size_t i = 0; i < n; ++i) {
        const long long x = i < na.size() ? na[i] : 0, y = i < nb.size() ? nb[i] : 0;
        if (int c = cmp(x, y)) return c;
    }
    if (int c = cmp(a.qualifier_rank, b.qualifier_rank)) return c;
    return cmp(a.qualifier_number, b.qualifier_number);
}

// -- pypi --------------------------------------------------------------------

GeneratedVersion gen_pypi(std::mt19937_64& rng) {
    GeneratedVersion v;
    std::string text = chance(rng, 0.1) ? "v" : "";
    if (chance(rng, 0.1)) {
        v.epoch = uniform(rng, 0, 2);
        text += std::to_string(*v.epoch) + "!";
    }
    const int n = uniform(rng, 1, 4);
    for (int i = 0; i < n; ++i) v.numbers.push_back(uniform(rng, 0, 3));
    text += join_numbers(v.numbers);
    static const std::vector<std::string> seps = {"", ".", "-", "_"};
    if (chance(rng, 0.35)) {
        v.pre_rank = uniform(rng, 0, 2);
        v.pre_number = uniform(rng, 0, 3);
        std::vector<std::string> words;
        if (v.pre_rank == 0) words = {"a", "alpha"};
        if (v.pre_rank == 1) words = {"b", "beta"};
        if (v.pre_rank == 2) words = {"rc", "c", "pre", "preview"};
        text += pick(rng, seps) + random_case(rng, pick(rng, words));
        if (v.pre_number != 0 || chance(rng, 0.5)) text += pick(rng, seps) + std::to_string(v.pre_number);
    }
    if (chance(rng, 0.25)) {
        v.post = uniform(rng, 0, 3);
        if (*v.post > 0 && chance(rng, 0.3)) {
            text += "-" + std::to_string(*v.post);
        } else {
            static const std::vector<std::string> words = {"post", "rev", "r"};
            text += pick(rng, seps) + pick(rng, words);
            if (*v.post != 0 || chance(rng, 0.5)) text += pick(rng, seps) + std::to_string(*v.post);
        }
    }
    if (chance(rng, 0.25)) {
        v.dev = uniform(rng, 0, 3);
        text += pick(rng, seps) + "dev";
        if (*v.dev != 0 || chance(rng, 0.5)) text += std::to_string(*v.dev);
    }
    v.text = text;
    return v;
}

int cmp_pypi(const GeneratedVersion& a, const GeneratedVersion& b) {
    if (int c = cmp(a.epoch.value_or(0), b.epoch.value_or(0))) return c;
    const std::size_t n = std::max(a.numbers.size(), b.numbers.size());
    for (std::size_t i = 0; i < n; ++i) {
        const long long x = i < a.numbers.size() ? a.numbers[i] : 0;
        const long long y = i < b.numbers.size() ? b.numbers[i] : 0;
        if (int c = cmp(x, y)) return c;
    }
    // Sort key from the ecosystem's versioning rules.
    auto pre_key = [](const GeneratedVersion& v) -> std::pair<long long, long long> {
        const bool has_pre = v.pre_rank != 3;
        if (!has_pre && !v.post && v.dev) return {-1, 0};
        if (!has_pre) return {std::numeric_limits<long long>::max(), 0};
        return {v.pre_rank, v.pre_number};
    };
    const auto pa = pre_key(a), pb = pre_key(b);
    if (pa != pb) return pa < pb ? -1 : 1;
    const long long post_a = a.post ? *a.post : -1, post_b = b.post ? *b.post : -1;
    if (int c = cmp(post_a, post_b)) return c;
    const long long big = std::numeric_limits<long long>::max();
    return cmp(a.dev ? *a.dev : big, b.dev ? *b.dev : big);
}

// -- gem / composer / generic -------------------------------------------------
// atoms: (class, value). Classes: gem 0 word, 5 number. composer: 0 unknown word,
// 1 dev, 2 alpha, 3 beta, 4 rc, 5 number, 6 patch. generic: 0 word, 5 number.

GeneratedVersion gen_gem(std::mt19937_64& rng) {
    GeneratedVersion v;
    const int n = uniform(rng, 1, 4);
    std::string text;
    for (int i = 0; i < n; ++i) {
        const int x = uniform(rng, 0, 3);
        v.atoms.emplace_back(5, std::to_string(x));
        text += (i ? "." : "") + std::to_string(x);
    }
    if (chance(rng, 0.4)) {
        static const std::vector<std::string> words = {"a", "alpha", "b", "beta", "pre", "rc"};
        const std::string w = pick(rng, words);
        v.atoms.emplace_back(0, w);
        text += "." + w;
        if (chance(rng, 0.6)) {
            const int x = uniform(rng, 0, 3);
            v.atoms.emplace_back(5, std::to_string(x));
            text += (chance(rng, 0.5) ? "." : "") + std::to_string(x);
        }
    }
    v.text = text;
    return v;
}

GeneratedVersion gen_composer(std::mt19937_64& rng) {
    GeneratedVersion v;
    const int n = uniform(rng, 1, 4);
    std::string text = chance(rng, 0.2) ? "v" : "";
    for (int i = 0; i < n; ++i) {
        const int x = uniform(rng, 0, 3);
        v.atoms.emplace_back(5, std::to_string(x));
        text += (i ? "." : "") + std::to_string(x);
    }
    if (chance(rng, 0.5)) {
        struct W { std::string text; int cls; std::string value; };
        static const std::vector<W> words = {
            {"dev", 1, ""}, {"alpha", 2, ""}, {"a", 2, ""}, {"beta", 3, ""}, {"b", 3, ""}, {"RC", 4, ""},
            {"rc", 4, ""}, {"pl", 6, ""}, {"p", 6, ""}, {"patch", 6, ""}, {"foo", 0, "foo"}, {"bar", 0, "bar"}};
        const W& w = pick(rng, words);
        v.atoms.emplace_back(w.cls, w.value);
        text += "-" + w.text;
        if (chance(rng, 0.5)) {
            const int x = uniform(rng, 0, 3);
            v.atoms.emplace_back(5, std::to_string(x));
            text += std::to_string(x);
        }
    }
    v.text = text;
    return v;
}

GeneratedVersion gen_generic(std::mt19937_64& rng) {
    GeneratedVersion v;
    const int n = uniform(rng, 1, 5);
    static const std::vector<std::string> words = {"a", "b", "rc", "beta", "z"};
    static const std::vector<std::string> seps = {".", "-", "_"};
    std::string text;
    int last_cls = -1;
    for (int i = 0; i < n; ++i) {
        const bool number = chance(rng, 0.7);
        const int cls = number ? 5 : 0;
        const std::string value = number ? std::to_string(uniform(rng, 0, 12)) : pick(rng, words);
        if (i) text += (cls != last_cls && chance(rng, 0.4)) ? "" : pick(rng, seps);
        text += value;
        v.atoms.emplace_back(cls, value);
        last_cls = cls;
    }
    v.text = text;
    return v;
}

int cmp_atom(const std::pair<int, std::string>& a, const std::pair<int, std::string>& b) {
    if (int c = cmp(a.first, b.first)) return c;
    if (a.first == 5) return cmp(std::stoll(a.second), std::stoll(b.second));
    return cmps(a.second, b.second);
}

int cmp_padded(const GeneratedVersion& a, const GeneratedVersion& b) {
    const std::pair<int, std::string> zero{5, "0"};
    const std::size_t n = std::max(a.atoms.size(), b.atoms.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& x = i < a.atoms.size() ? a.atoms[i] : zero;
        const auto& y = i < b.atoms.size() ? b.atoms[i] : zero;
        if (int c = cmp_atom(x, y)) return c;
    }
    return 0;
}

int cmp_generic(const GeneratedVersion& a, const GeneratedVersion& b) {
    const std::size_t n = std::min(a.atoms.size(), b.atoms.size());
    for (std::size_t i = 0; i < n; ++i)
        if (int c = cmp_atom(a.atoms[i], b.atoms[i])) return c;
    return cmp(static_cast<long long>(a.atoms.size()), static_cast<long long>(b.atoms.size()));
}

} // namespace

GeneratedVersion random_version(const std::string& ecosystem, std::mt19937_64& rng) {
    switch (family_of(ecosystem)) {
    case Family::Semver: return gen_semver(ecosystem, rng);
    case Family::Maven: return gen_maven(rng);
    case Family::Pypi: return gen_pypi(rng);
    case Family::Gem: return gen_gem(rng);
    case Family::Composer: return gen_composer(rng);
    case Family::Generic: return gen_generic(rng);
    }
    return {};
}

int oracle_compare(const std::string& ecosystem, const GeneratedVersion& a, const GeneratedVersion& b) {
    switch (family_of(ecosystem)) {
    case Family::Semver: return cmp_semver(a, b);
    case Family::Maven: return cmp_maven(a, b);
    case Family::Pypi: return cmp_pypi(a, b);
    case Family::Gem:
    case Family::Composer: return cmp_padded(a, b);
    case Family::Generic: return cmp_generic(a, b);
    }
    return 0;
}

std::map<int, int> brute_force_depths(int node_count, const std::vector<std::pair<int, int>>& edges,
                                      const std::set<int>& roots) {
    const int inf = std::numeric_limits<int>::max();
    std::vector<int> dist(static_cast<std::size_t>(node_count), inf);
    for (int r : roots) dist[static_cast<std::size_t>(r)] = 0;
    for (int round = 0; round < node_count; ++round) {
        bool changed = false;
        for (const auto& [from, to] : edges) {
            const int df = dist[static_cast<std::size_t>(from)];
            if (df == inf) continue;
            int& dt = dist[static_cast<std::size_t>(to)];
            if (df + 1 < dt) {
                dt = df + 1;
                changed = true;
            }
        }
        if (!changed) break;
    }
    std::map<int, int> out;
    for (int i = 0; i < node_count; ++i)
        if (dist[static_cast<std::size_t>(i)] != inf) out[i] = dist[static_cast<std::size_t>(i)];
    return out;
}

double direct_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    long double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const long double mx = sx / n, my = sy / n;
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

long long julian_day_number(int year, int month, int day) {
    const long long y = year, m = month, d = day;
    return (1461 * (y + 4800 + (m - 14) / 12)) / 4 + (367 * (m - 2 - 12 * ((m - 14) / 12))) / 12 -
           (3 * ((y + 4900 + (m - 14) / 12) / 100)) / 4 + d - 32075;
}

} // namespace relscan::testing
