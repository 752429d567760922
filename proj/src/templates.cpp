#include "quadmed/templates.hpp"

#include "quadmed/errors.hpp"
#include "quadmed/io.hpp"

namespace quadmed {

TemplateLibrary TemplateLibrary::defaults() {
    TemplateLibrary lib;
    lib.set("treats", "{head} treats {tail}.");
    lib.set("may_be_treated_by", "{head} may be treated by {tail}.");
    lib.set("may_be_prevented_by", "{head} may be prevented by {tail}.");
    lib.set("has_associated_procedure", "{head} is an associated procedure for {tail}.");
    lib.set("associated_with", "{head} is associated with {tail}.");
    lib.set("related_to", "{head} is related to {tail}.");
    lib.set("is_a", "{head} is a type of {tail}.");
    lib.set("contraindicated_with", "{head} is contraindicated with {tail}.");
    return lib;
}

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& tsv) {
    TemplateLibrary lib = defaults();
    for (const auto& row : read_tsv(tsv, {"relation", "template"})) {
        try {
            lib.set(row.fields[0], row.fields[1]);
        } catch (const IntegrityError& e) {
            throw ParseError(tsv.string(), row.line, e.what());
        }
    }
    return lib;
}

void TemplateLibrary::set(const std::string& relation, const std::string& tpl) {
    if (relation.empty()) throw IntegrityError("empty relation label");
    auto count = [&](const std::string& slot) {
        std::size_t n = 0, pos = 0;
        while ((pos = tpl.find(slot, pos)) != std::string::npos) {
            ++n;
            pos += slot.size();
        }
        return n;
    };
    if (count("{head}") != 1 || count("{tail}") != 1) {
        throw IntegrityError("template for " + relation +
                             " must contain {head} and {tail} exactly once");
    }
    templates_[relation] = tpl;
}

const std::string& TemplateLibrary::for_relation(const std::string& relation) const {
    auto it = templates_.find(relation);
    if (it == templates_.end()) {
        throw NotFoundError("no statement template for relation " + relation);
    }
    return it->second;
}

std::string TemplateLibrary::render(const std::string& relation, const std::string& head_surface,
                                    const std::string& tail_surface) const {
    std::string out = for_relation(relation);
    out.replace(out.find("{head}"), 6, head_surface);
    out.replace(out.find("{tail}"), 6, tail_surface);
    return out;
}

}  // namespace quadmed
