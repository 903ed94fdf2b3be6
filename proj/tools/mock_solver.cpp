// Miniature stand-in for an external simulation code. Reads `name = value`
// lines from the input file named on the command line, computes a
// deterministic quantity of interest, and writes it to a CSV file in the
// current working directory. Flags simulate the failure modes of real
// solvers: crashes, hangs, non-convergence in corner regions, and
// transient failures that succeed on retry.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// `name > value` or `name < value` (spaces optional).
struct Condition {
    std::string name;
    char op = '>';
    double threshold = 0.0;
};

Condition parse_condition(const std::string& text) {
    const auto pos = text.find_first_of("<>");
    if (pos == std::string::npos) {
        std::fprintf(stderr, "mock_solver: bad --fail-if condition '%s'\n", text.c_str());
        std::exit(2);
    }
    Condition c;
    c.name = trim(text.substr(0, pos));
    c.op = text[pos];
    try {
        c.threshold = std::stod(text.substr(pos + 1));
    } catch (const std::exception&) {
        std::fprintf(stderr, "mock_solver: bad threshold in '%s'\n", text.c_str());
        std::exit(2);
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic mock solver"};
    std::string input_file;
    std::string op = "sum";
    std::string out_file = "output.csv";
    std::string coords_text;
    std::string fail_once_marker;
    std::vector<std::string> fail_if;
    double sleep_seconds = 0.0;
    bool crash = false;

    app.add_option("input", input_file, "input file with name = value lines")->required();
    app.add_option("--op", op, "quantity of interest: sum | polyprobe");
    app.add_option("--out", out_file, "output CSV filename");
    app.add_option("--coords", coords_text, "comma-separated probe coordinates (polyprobe)");
    app.add_option("--sleep", sleep_seconds, "seconds to sleep before computing");
    app.add_flag("--crash", crash, "abort with a nonzero exit code");
    app.add_option("--fail-if", fail_if,
                   "condition 'name>value' or 'name<value'; all given conditions "
                   "must hold for the run to fail (exit 3)");
    app.add_option("--fail-once", fail_once_marker,
                   "fail with exit 4 unless this marker file exists (created on the "
                   "failing run, so a retry succeeds)");
    CLI11_PARSE(app, argc, argv);

    if (sleep_seconds > 0.0)
        std::this_thread::sleep_for(std::chrono::duration<double>(sleep_seconds));

    if (crash) {
        std::fprintf(stderr, "mock_solver: crash requested\n");
        return 9;
    }

    if (!fail_once_marker.empty()) {
        std::ifstream probe(fail_once_marker);
        if (!probe) {
            std::ofstream marker(fail_once_marker);
            marker << "failed once\n";
            std::fprintf(stderr, "mock_solver: transient failure (will succeed on retry)\n");
            return 4;
        }
    }

    std::ifstream in(input_file);
    if (!in) {
        std::fprintf(stderr, "mock_solver: cannot open input '%s'\n", input_file.c_str());
        return 2;
    }
    std::vector<std::pair<std::string, double>> values;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string name = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (name.empty() || value.empty()) continue;
        try {
            values.emplace_back(name, std::stod(value));
        } catch (const std::exception&) {
            std::fprintf(stderr, "mock_solver: bad value for '%s'\n", name.c_str());
            return 2;
        }
    }
    if (values.empty()) {
        std::fprintf(stderr, "mock_solver: no 'name = value' lines in '%s'\n",
                     input_file.c_str());
        return 2;
    }

    if (!fail_if.empty()) {
        bool all_hold = true;
        for (const auto& text : fail_if) {
            const Condition c = parse_condition(text);
            bool found = false;
            for (const auto& [name, v] : values) {
                if (name == c.name) {
                    found = true;
                    all_hold = all_hold && (c.op == '>' ? v > c.threshold : v < c.threshold);
                    break;
                }
            }
            if (!found) {
                std::fprintf(stderr, "mock_solver: --fail-if names unknown parameter '%s'\n",
                             c.name.c_str());
                return 2;
            }
        }
        if (all_hold) {
            std::fprintf(stderr, "mock_solver: did not converge (parameter region flagged)\n");
            return 3;
        }
    }

    std::ofstream out(out_file);
    if (!out) {
        std::fprintf(stderr, "mock_solver: cannot write '%s'\n", out_file.c_str());
        return 2;
    }
    if (op == "sum") {
        double total = 0.0;
        for (const auto& [name, v] : values) total += v;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", total);
        out << buf << "\n";
    } else if (op == "polyprobe") {
        // One observation per probe coordinate c: y(c) = sum_i x_i * c^i,
        // powers indexed by input-file order (first parameter -> c^1).
        if (coords_text.empty()) {
            std::fprintf(stderr, "mock_solver: --op polyprobe needs --coords\n");
            return 2;
        }
        std::vector<double> coords;
        std::stringstream ss(coords_text);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                coords.push_back(std::stod(trim(tok)));
            } catch (const std::exception&) {
                std::fprintf(stderr, "mock_solver: bad coordinate '%s'\n", tok.c_str());
                return 2;
            }
        }
        for (std::size_t j = 0; j < coords.size(); ++j) {
            double y = 0.0;
            for (std::size_t i = 0; i < values.size(); ++i)
                y += values[i].second * std::pow(coords[j], static_cast<double>(i + 1));
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", y);
            out << (j == 0 ? "" : ",") << buf;
        }
        out << "\n";
    } else {
        std::fprintf(stderr, "mock_solver: unknown --op '%s'\n", op.c_str());
        return 2;
    }
    return 0;
}
