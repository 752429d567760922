#include "quadmed/corpus.hpp"

#include <fstream>
#include <set>

#include "quadmed/errors.hpp"
#include "quadmed/io.hpp"
#include "quadmed/util.hpp"

namespace quadmed {

const std::vector<std::string>& default_section_whitelist() {
    static const std::vector<std::string> whitelist = {
        "History of Present Illness",
        "Past Medical History",
        "Brief Hospital Course",
        "Major Surgical or Invasive Procedure*",
        "Discharge Diagnos*",
        "Medications on Admission",
        "Discharge Medications",
    };
    return whitelist;
}

namespace {

std::vector<SourceCode> codes_from_json(const json& arr, const std::string& file, std::size_t line) {
    std::vector<SourceCode> out;
    if (!arr.is_array()) throw ParseError(file, line, "code list is not an array");
    for (const auto& item : arr) {
        if (!item.is_object() || !item.contains("vocabulary") || !item.contains("code")) {
            throw ParseError(file, line, "code entry needs vocabulary and code");
        }
        out.push_back(SourceCode{item["vocabulary"].get<std::string>(),
                                 item["code"].get<std::string>()});
    }
    return out;
}

json codes_to_json(const std::vector<SourceCode>& codes) {
    json arr = json::array();
    for (const auto& c : codes) arr.push_back({{"vocabulary", c.vocabulary}, {"code", c.code}});
    return arr;
}

}  // namespace

std::vector<Admission> parse_admissions(const std::filesystem::path& jsonl) {
    std::vector<Admission> out;
    std::set<std::string> seen_ids;
    const std::string file = jsonl.string();

    for_each_jsonl(jsonl, [&](std::size_t line, const json& j) {
        if (!j.is_object()) throw ParseError(file, line, "admission is not an object");
        for (const char* key : {"admission_id", "patient_id", "diagnoses", "procedures",
                                "medications", "sections"}) {
            if (!j.contains(key)) throw ParseError(file, line, std::string("missing key ") + key);
        }
        Admission a;
        a.admission_id = j["admission_id"].get<std::string>();
        a.patient_id = j["patient_id"].get<std::string>();
        if (a.admission_id.empty()) throw ParseError(file, line, "empty admission_id");
        if (a.patient_id.empty()) throw ParseError(file, line, "empty patient_id");
        a.events.diagnoses = codes_from_json(j["diagnoses"], file, line);
        a.events.procedures = codes_from_json(j["procedures"], file, line);
        a.events.medications = codes_from_json(j["medications"], file, line);
        if (!j["sections"].is_array()) throw ParseError(file, line, "sections is not an array");
        for (const auto& s : j["sections"]) {
            if (!s.is_object() || !s.contains("title") || !s.contains("body")) {
                throw ParseError(file, line, "section needs title and body");
            }
            Section sec{s["title"].get<std::string>(), s["body"].get<std::string>()};
            if (normalize_ws(sec.title).empty()) throw ParseError(file, line, "empty section title");
            a.sections.push_back(std::move(sec));
        }
        if (!seen_ids.insert(a.admission_id).second) {
            throw IntegrityError(file + ":" + std::to_string(line) +
                                 ": duplicate admission_id " + a.admission_id);
        }
        out.push_back(std::move(a));
    });
    return out;
}

void write_admissions(const std::filesystem::path& jsonl, const std::vector<Admission>& admissions) {
    std::string buf;
    for (const auto& a : admissions) {
        json j;
        j["admission_id"] = a.admission_id;
        j["patient_id"] = a.patient_id;
        j["diagnoses"] = codes_to_json(a.events.diagnoses);
        j["procedures"] = codes_to_json(a.events.procedures);
        j["medications"] = codes_to_json(a.events.medications);
        json secs = json::array();
        for (const auto& s : a.sections) secs.push_back({{"title", s.title}, {"body", s.body}});
        j["sections"] = secs;
        buf += j.dump();
        buf += '\n';
    }
    write_file(jsonl, buf);
}

Context extract_context(const Admission& admission, const std::vector<std::string>& whitelist) {
    Context ctx;
    ctx.admission_id = admission.admission_id;

    for (const auto& section : admission.sections) {
        bool included = false;
        for (const auto& pattern : whitelist) {
            if (glob_match(pattern, section.title)) {
                included = true;
                break;
            }
        }
        if (!included) continue;
        if (!ctx.text.empty()) ctx.text += '\n';
        ctx.text += "== " + section.title + " ==\n" + section.body;
        ctx.included_titles.push_back(section.title);
    }

    if (ctx.included_titles.empty()) {
        throw IntegrityError("admission " + admission.admission_id +
                             " has no whitelisted sections");
    }
    ctx.token_count = count_tokens(ctx.text);
    return ctx;
}

std::vector<Admission> dedup_patients(const std::vector<Admission>& admissions) {
    std::vector<Admission> out;
    std::set<std::string> seen;
    for (const auto& a : admissions) {
        if (seen.insert(a.patient_id).second) out.push_back(a);
    }
    return out;
}

}  // namespace quadmed
