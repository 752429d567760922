#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace quadmed {

// One fixed statement template per relation label, with {head} and {tail}
// placeholders. Statement wording is a property of the relation, not of the
// admission, so swapping one entity changes exactly one surface form.
class TemplateLibrary {
public:
    static TemplateLibrary defaults();
    // TSV with header "relation\ttemplate"; overrides/extends the defaults.
    static TemplateLibrary load(const std::filesystem::path& tsv);

    // Throws NotFoundError for relations without a template; a template must
    // contain both placeholders exactly once.
    const std::string& for_relation(const std::string& relation) const;
    bool has(const std::string& relation) const { return templates_.count(relation) != 0; }
    void set(const std::string& relation, const std::string& tpl);

    std::string render(const std::string& relation, const std::string& head_surface,
                       const std::string& tail_surface) const;

private:
    std::map<std::string, std::string> templates_;
};

}  // namespace quadmed
