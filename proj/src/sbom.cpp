#include "relscan/sbom.hpp"

#include "relscan/purl.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <deque>
#include <unordered_map>

namespace relscan::sbom {

using nlohmann::json;

std::string Sbom::subject_ref() const {
    if (!metadata.subject) return {};
    return metadata.subject->bom_ref.empty() ? component_key(*metadata.subject) : metadata.subject->bom_ref;
}

std::size_t Sbom::edge_count() const {
    const std::string subject = subject_ref();
    std::size_t n = 0;
    for (const auto& d : dependencies)
        if (d.ref != subject || subject.empty()) n += d.depends_on.size();
    return n;
}

std::size_t DependencyGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& [from, to] : edges) n += to.size();
    return n;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, const std::string& what) {
    throw Error(ErrorKind::Parse, "sbom " + path + ": " + what);
}

std::string get_string(const json& obj, const char* key, const std::string& path, bool required) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        if (required) parse_fail(path + "." + key, "missing");
        return {};
    }
    if (!it->is_string()) parse_fail(path + "." + key, "expected string");
    return it->get<std::string>();
}

Component parse_component(const json& node, const std::string& path) {
    if (!node.is_object()) parse_fail(path, "expected object");
    Component c;
    c.display_name = get_string(node, "name", path, true);
    c.version = get_string(node, "version", path, false);
    const std::string group = get_string(node, "group", path, false);
    if (!group.empty()) c.group = group;
    c.bom_ref = get_string(node, "bom-ref", path, false);
    const std::string purl_text = get_string(node, "purl", path, false);
    if (!purl_text.empty()) {
        try {
            c.purl = purl::parse(purl_text);
        } catch (const Error& e) {
            parse_fail(path + ".purl", e.what());
        }
        if (c.purl->version && c.version.empty()) c.version = *c.purl->version;
        if (c.purl->version && *c.purl->version != c.version)
            parse_fail(path + ".version", "'" + c.version + "' differs from purl version '" + *c.purl->version + "'");
    }
    if (const auto it = node.find("hashes"); it != node.end()) {
        if (!it->is_array()) parse_fail(path + ".hashes", "expected array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string hp = path + ".hashes[" + std::to_string(i) + "]";
            c.hashes[get_string((*it)[i], "alg", hp, true)] = get_string((*it)[i], "content", hp, true);
        }
    }
    if (c.bom_ref.empty()) c.bom_ref = component_key(c);
    return c;
}

void collect_components(const json& array, const std::string& path, std::vector<Component>& out) {
    if (!array.is_array()) parse_fail(path, "expected array");
    for (std::size_t i = 0; i < array.size(); ++i) {
        const std::string cp = path + "[" + std::to_string(i) + "]";
        out.push_back(parse_component(array[i], cp));
        if (const auto nested = array[i].find("components"); nested != array[i].end())
            collect_components(*nested, cp + ".components", out);
    }
}

std::vector<ToolId> parse_tools(const json& tools, const std::string& path) {
    std::vector<ToolId> out;
    auto read = [&](const json& arr, const std::string& p) {
        if (!arr.is_array()) parse_fail(p, "expected array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string tp = p + "[" + std::to_string(i) + "]";
            out.push_back({get_string(arr[i], "name", tp, false), get_string(arr[i], "version", tp, false)});
        }
    };
    if (tools.is_array()) {
        read(tools, path);
    } else if (tools.is_object()) {
        if (const auto it = tools.find("components"); it != tools.end()) read(*it, path + ".components");
        if (const auto it = tools.find("services"); it != tools.end()) read(*it, path + ".services");
    } else {
        parse_fail(path, "expected array or object");
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

} // namespace

Sbom parse(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        parse_fail("$", std::string("malformed JSON at byte ") + std::to_string(e.byte));
    }
    if (!doc.is_object()) parse_fail("$", "expected object");
    if (get_string(doc, "bomFormat", "$", true) != "CycloneDX") parse_fail("$.bomFormat", "not CycloneDX");
    Sbom bom;
    bom.spec_version = get_string(doc, "specVersion", "$", true);
    if (bom.spec_version != "1.4" && bom.spec_version != "1.5")
        throw Error(ErrorKind::Unsupported, "sbom $.specVersion: unsupported CycloneDX version " + bom.spec_version);

    if (const auto meta = doc.find("metadata"); meta != doc.end()) {
        if (!meta->is_object()) parse_fail("$.metadata", "expected object");
        const std::string ts = get_string(*meta, "timestamp", "$.metadata", false);
        if (!ts.empty()) {
            bom.metadata.timestamp = parse_iso8601(ts);
            if (!bom.metadata.timestamp) parse_fail("$.metadata.timestamp", "invalid timestamp '" + ts + "'");
        }
        if (const auto tools = meta->find("tools"); tools != meta->end())
            bom.metadata.tools = parse_tools(*tools, "$.metadata.tools");
        if (const auto subject = meta->find("component"); subject != meta->end())
            bom.metadata.subject = parse_component(*subject, "$.metadata.component");
    }

    if (const auto comps = doc.find("components"); comps != doc.end())
        collect_components(*comps, "$.components", bom.components);

    std::set<std::string> refs;
    for (std::size_t i = 0; i < bom.components.size(); ++i) {
        const Component& c = bom.components[i];
        if (!refs.insert(c.bom_ref).second) parse_fail("$.components", "duplicate bom-ref '" + c.bom_ref + "'");
        if (!c.purl) bom.purlless_refs.push_back(c.bom_ref);
    }
    std::sort(bom.purlless_refs.begin(), bom.purlless_refs.end());
    const std::string subject = bom.subject_ref();
    if (!subject.empty()) refs.insert(subject);

    if (const auto deps = doc.find("dependencies"); deps != doc.end()) {
        if (!deps->is_array()) parse_fail("$.dependencies", "expected array");
        for (std::size_t i = 0; i < deps->size(); ++i) {
            const std::string dp = "$.dependencies[" + std::to_string(i) + "]";
            DependencyEntry entry;
            entry.ref = get_string((*deps)[i], "ref", dp, true);
            if (!refs.count(entry.ref)) parse_fail(dp + ".ref", "dangling dependency ref '" + entry.ref + "'");
            if (const auto on = (*deps)[i].find("dependsOn"); on != (*deps)[i].end()) {
                if (!on->is_array()) parse_fail(dp + ".dependsOn", "expected array");
                for (std::size_t j = 0; j < on->size(); ++j) {
                    const std::string jp = dp + ".dependsOn[" + std::to_string(j) + "]";
                    if (!(*on)[j].is_string()) parse_fail(jp, "expected string");
                    const std::string target = (*on)[j].get<std::string>();
                    if (!refs.count(target)) parse_fail(jp, "dangling dependency ref '" + target + "'");
                    entry.depends_on.push_back(target);
                }
            }
            bom.dependencies.push_back(std::move(entry));
        }
    }
    return bom;
}

namespace {

json component_json(const Component& c, const std::string& ref) {
    json j = json::object();
    j["bom-ref"] = ref;
    j["type"] = "library";
    if (c.group) j["group"] = *c.group;
    j["name"] = c.display_name;
    if (!c.version.empty()) j["version"] = c.version;
    if (c.purl) j["purl"] = purl::format(*c.purl);
    if (!c.hashes.empty()) {
        json hashes = json::array();
        for (const auto& [alg, content] : c.hashes) hashes.push_back({{"alg", alg}, {"content", content}});
        j["hashes"] = std::move(hashes);
    }
    return j;
}

} // namespace

std::string write(const Sbom& bom) {
    json doc = json::object();
    doc["bomFormat"] = "CycloneDX";
    doc["specVersion"] = "1.5";
    doc["version"] = 1;
    json meta = json::object();
    if (bom.metadata.timestamp) meta["timestamp"] = format_iso8601(*bom.metadata.timestamp);
    json tools = json::array();
    std::vector<ToolId> sorted_tools = bom.metadata.tools;
    std::sort(sorted_tools.begin(), sorted_tools.end());
    for (const auto& t : sorted_tools) tools.push_back({{"type", "application"}, {"name", t.name}, {"version", t.version}});
    meta["tools"] = {{"components", tools}};

    // bom-refs are rewritten to component keys so output is stable across merges.
    std::unordered_map<std::string, std::string> ref_to_key;
    std::string subject_key;
    if (bom.metadata.subject) {
        subject_key = component_key(*bom.metadata.subject);
        ref_to_key[bom.subject_ref()] = subject_key;
        meta["component"] = component_json(*bom.metadata.subject, subject_key);
        meta["component"]["type"] = "application";
    }
    doc["metadata"] = std::move(meta);

    std::vector<std::pair<std::string, const Component*>> comps;
    for (const auto& c : bom.components) {
        const std::string key = component_key(c);
        ref_to_key[c.bom_ref] = key;
        comps.emplace_back(key, &c);
    }
    std::sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    json components = json::array();
    for (const auto& [key, c] : comps) components.push_back(component_json(*c, key));
    doc["components"] = std::move(components);

    std::map<std::string, std::set<std::string>> edges;
    if (!subject_key.empty()) edges[subject_key];
    for (const auto& [key, c] : comps) edges[key];
    for (const auto& d : bom.dependencies) {
        const auto from = ref_to_key.find(d.ref);
        const std::string from_key = from == ref_to_key.end() ? d.ref : from->second;
        for (const auto& t : d.depends_on) {
            const auto to = ref_to_key.find(t);
            edges[from_key].insert(to == ref_to_key.end() ? t : to->second);
        }
    }
    json deps = json::array();
    for (const auto& [from, to] : edges) deps.push_back({{"ref", from}, {"dependsOn", json(std::vector<std::string>(to.begin(), to.end()))}});
    doc["dependencies"] = std::move(deps);
    return doc.dump(2) + "\n";
}

Sbom merge(std::span<const Sbom> parts) {
    if (parts.empty()) throw Error(ErrorKind::Validation, "merge_sboms: no parts");

    Sbom out;
    out.spec_version = "1.5";

    // Deterministic subject: smallest key among the parts' subjects.
    std::optional<Component> subject;
    for (const auto& part : parts) {
        if (!part.metadata.subject) continue;
        if (!subject || component_key(*part.metadata.subject) < component_key(*subject)) subject = part.metadata.subject;
    }
    std::string subject_key;
    if (subject) {
        subject_key = component_key(*subject);
        subject->bom_ref = subject_key;
        subject->analysis_state = AnalysisState::New;
        out.metadata.subject = subject;
    }

    std::map<std::string, Component> components;
    std::map<std::string, std::set<std::string>> edges;
    std::set<ToolId> tools;
    for (const auto& part : parts) {
        tools.insert(part.metadata.tools.begin(), part.metadata.tools.end());
        if (part.metadata.timestamp && (!out.metadata.timestamp || *part.metadata.timestamp > *out.metadata.timestamp))
            out.metadata.timestamp = part.metadata.timestamp;

        std::unordered_map<std::string, std::string> ref_to_key;
        if (part.metadata.subject) ref_to_key[part.subject_ref()] = subject_key;
        for (const auto& c : part.components) {
            const std::string key = component_key(c);
            ref_to_key[c.bom_ref] = key;
            auto [it, inserted] = components.try_emplace(key, c);
            Component& merged = it->second;
            if (inserted) {
                merged.bom_ref = key;
                merged.analysis_state = AnalysisState::New;
                continue;
            }
            // Order-insensitive combination of per-part metadata.
            if (c.group && (!merged.group || *c.group < *merged.group)) merged.group = c.group;
            if (c.display_name < merged.display_name) merged.display_name = c.display_name;
            for (const auto& [alg, digest] : c.hashes) {
                auto h = merged.hashes.find(alg);
                if (h == merged.hashes.end())
                    merged.hashes.emplace(alg, digest);
                else if (digest < h->second)
                    h->second = digest;
            }
        }
        for (const auto& d : part.dependencies) {
            const auto from = ref_to_key.find(d.ref);
            if (from == ref_to_key.end()) continue;
            auto& targets = edges[from->second];
            for (const auto& t : d.depends_on) {
                const auto to = ref_to_key.find(t);
                if (to != ref_to_key.end()) targets.insert(to->second);
            }
        }
    }

    out.metadata.tools.assign(tools.begin(), tools.end());
    std::map<std::string, std::set<std::string>> versions_by_product;
    for (auto& [key, c] : components) {
        if (!c.purl) out.purlless_refs.push_back(key);
        else versions_by_product[purl::product_key(*c.purl)].insert(c.version);
        out.components.push_back(c);
    }
    for (const auto& [product, versions] : versions_by_product)
        if (versions.size() > 1) out.version_conflicts.push_back(product);

    if (!subject_key.empty()) edges[subject_key];
    for (const auto& [key, c] : components) edges[key];
    for (const auto& [from, to] : edges)
        out.dependencies.push_back({from, std::vector<std::string>(to.begin(), to.end())});
    return out;
}

DependencyGraph build_graph(const Sbom& bom) {
    DependencyGraph g;
    for (const auto& c : bom.components) g.nodes.insert(c.bom_ref);
    const std::string subject = bom.subject_ref();
    bool subject_entry = false;
    for (const auto& d : bom.dependencies) {
        if (!subject.empty() && d.ref == subject) {
            subject_entry = true;
            for (const auto& t : d.depends_on)
                if (g.nodes.count(t)) g.roots.insert(t);
            continue;
        }
        if (!g.nodes.count(d.ref)) continue;
        for (const auto& t : d.depends_on)
            if (g.nodes.count(t)) g.edges[d.ref].insert(t);
    }
    if (!subject_entry) {
        std::set<std::string> has_incoming;
        for (const auto& [from, to] : g.edges)
            for (const auto& t : to)
                if (t != from) has_incoming.insert(t);
        for (const auto& n : g.nodes)
            if (!has_incoming.count(n)) g.roots.insert(n);
    }
    return g;
}

DepthAssignment compute_depths(const DependencyGraph& graph) {
    DepthAssignment a;
    std::deque<std::string> frontier;
    for (const auto& r : graph.roots) {
        if (!graph.nodes.count(r)) continue;
        a.depth.emplace(r, 0);
        frontier.push_back(r);
    }
    while (!frontier.empty()) {
        const std::string node = std::move(frontier.front());
        frontier.pop_front();
        const int d = a.depth.at(node);
        const auto it = graph.edges.find(node);
        if (it == graph.edges.end()) continue;
        for (const auto& child : it->second) {
            if (a.depth.count(child)) continue; // visited; also terminates cycles
            a.depth.emplace(child, d + 1);
            frontier.push_back(child);
        }
    }
    for (const auto& n : graph.nodes)
        if (!a.depth.count(n)) a.unreachable.insert(n);
    return a;
}

std::array<std::size_t, kDepthBuckets> depth_histogram(const DepthAssignment& assignment) {
    std::array<std::size_t, kDepthBuckets> h{};
    for (const auto& [ref, d] : assignment.depth) ++h[static_cast<std::size_t>(depth_bucket(d))];
    return h;
}

} // namespace relscan::sbom
