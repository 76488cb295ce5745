#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace std;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    fs::path tmp = fs::temp_directory_path() / "mcml_cli_out.txt";
    std::string cmd = std::string(MCML_CLI_BIN) + " " + args + " > " + tmp.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    std::ifstream in(tmp);
    std::stringstream ss;
    ss << in.rdbuf();
    fs::remove(tmp);
    return {WEXITSTATUS(rc), ss.str()};
}

} // namespace

TEST_CASE("cli sizes: table-pinned outputs") {
    CmdResult r = run_cli("sizes --family fastgrnn --mode row --hidden 45 --dw 0.2 --du 0.2");
    CHECK(r.exit_code == 0);
    CHECK(r.out == "7752 B (7.57KB)\n");

    r = run_cli("sizes --family bonsai --depth 2 --dim 3");
    CHECK(r.exit_code == 0);
    CHECK(r.out == "15800 B (15.43KB)\n");

    r = run_cli("sizes --family protonn --d 2 --m 4 --rho 1.0");
    CHECK(r.exit_code == 0);
    CHECK(r.out == "24772 B (24.19KB)\n");

    r = run_cli("sizes --family directconv --arch 'A,C1(6,3),Dr,D*'");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find(" B (") != std::string::npos);

    // determinism
    CmdResult again = run_cli("sizes --family bonsai --depth 2 --dim 3");
    CHECK(again.out == "15800 B (15.43KB)\n");
}

TEST_CASE("cli usage errors exit 2") {
    CHECK(run_cli("sizes --family bonsai --banana 1").exit_code == 2);
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("sizes").exit_code == 2); // missing required --family
    // invalid spec values are runtime errors with a clean message
    CmdResult r = run_cli("sizes --family fastgrnn --mode row --hidden 45 --dw 2.0");
    CHECK(r.exit_code == 1);
    CHECK(r.out.find("error") != std::string::npos);
}

TEST_CASE("cli search: protonn at 8KB reports no feasible model") {
    CmdResult r = run_cli(
        "search --family protonn --budget 8 --synthetic --synthetic-per-class 20 --seed 4");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("no feasible model") != std::string::npos);
}

TEST_CASE("cli report renders a csv") {
    fs::path csv = fs::temp_directory_path() / "mcml_cli_report.csv";
    {
        std::ofstream out(csv);
        out << "family,budget_kb,feasible,spec,footprint_bytes,footprint_kb,val_accuracy,"
               "test_accuracy\n";
        out << "Direct Conv.,64,1,arch,59627,58.23,0.660,0.657\n";
        out << "ProtoNN,8,0,,0,,,\n";
    }
    CmdResult r = run_cli("report --in " + csv.string() + " --format md");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("0.657 [58.23KB]") != std::string::npos);
    CHECK(r.out.find("--") != std::string::npos);

    CmdResult rc = run_cli("report --in " + csv.string() + " --format csv");
    CHECK(rc.exit_code == 0);
    CHECK(rc.out.find("0.657") != std::string::npos);
    fs::remove(csv);

    // malformed csv exits 2
    fs::path bad = fs::temp_directory_path() / "mcml_cli_bad.csv";
    std::ofstream(bad) << "not a header\n1,2\n";
    CHECK(run_cli("report --in " + bad.string()).exit_code == 2);
    fs::remove(bad);
}

TEST_CASE("cli train/eval round trip on a tiny synthetic set") {
    fs::path model = fs::temp_directory_path() / "mcml_cli_model.bin";
    CmdResult r = run_cli("train --family bonsai --depth 1 --dim 2 --epochs 3 --synthetic "
                          "--synthetic-per-class 10 --seed 5 --out " +
                          model.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(model));
    CmdResult e = run_cli("eval --model " + model.string() +
                          " --synthetic --synthetic-per-class 10 --seed 5 --split val");
    CHECK(e.exit_code == 0);
    CHECK(e.out.find("bonsai val accuracy") != std::string::npos);
    fs::remove(model);
}
