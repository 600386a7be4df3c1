#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

std::string g_binary;
std::filesystem::path g_dir;

int run(const std::string& args, const std::string& tag) {
    const std::string out = (g_dir / (tag + ".out")).string();
    const std::string err = (g_dir / (tag + ".err")).string();
    const std::string cmd = g_binary + " " + args + " > " + out + " 2> " + err;
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& tag, const char* ext) {
    std::ifstream is(g_dir / (tag + ext), std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    os << content;
}

const char* kModelBlock = R"([model]
family = gaussian
m = 6
p = 5
q = 2
)";

std::string sim_block(const std::string& extra = "") {
    return std::string(R"([simulation]
beta0 = 1,2,4,3,3
sigma0_sq = 0.25
sigma_u_sq = 0.56
n_grid = 40
replications = 1
seed = 4242
)") + extra;
}

}  // namespace

TEST_CASE("simulate writes a reproducible csv") {
    const auto cfg = g_dir / "sim.cfg";
    write_file(cfg, std::string(kModelBlock) + sim_block());

    const auto csv_a = g_dir / "a.csv";
    const auto csv_b = g_dir / "b.csv";
    CHECK(run("simulate --config " + cfg.string() + " --out " + csv_a.string(), "sim_a") == 0);
    CHECK(run("simulate --config " + cfg.string() + " --out " + csv_b.string(), "sim_b") == 0);

    const std::string a = read_file(csv_a);
    CHECK(a == read_file(csv_b));
    CHECK(a.rfind("group,y,x1,x2,x3,x4,x5,z1,z2\n", 0) == 0);
    CHECK(std::count(a.begin(), a.end(), '\n') == 1 + 40 * 6);
    CHECK(slurp("sim_a", ".out").find("n=40 m=6 p=5 q=2") != std::string::npos);
}

TEST_CASE("fit recovers beta on noise-free data and writes json") {
    const auto cfg_sim = g_dir / "sim_clean.cfg";
    write_file(cfg_sim, std::string(kModelBlock) + R"([simulation]
beta0 = 1,2,4,3,3
sigma0_sq = 1e-12
g_diag = 1e-20,1e-20
n_grid = 40
replications = 1
seed = 99
)");
    const auto data = g_dir / "clean.csv";
    REQUIRE(run("simulate --config " + cfg_sim.string() + " --out " + data.string(), "sim_c") ==
            0);

    const auto cfg_fit = g_dir / "fit.cfg";
    write_file(cfg_fit, std::string(kModelBlock) + "[fit]\nestimator = mle\n");
    const auto out = g_dir / "fit.json";
    CHECK(run("fit --config " + cfg_fit.string() + " --data " + data.string() + " --out " +
                  out.string(),
              "fit_c") == 0);

    const nlohmann::json result = nlohmann::json::parse(read_file(out));
    CHECK(result["estimator"] == "mle");
    const std::vector<double> truth{1, 2, 4, 3, 3};
    for (int j = 0; j < 5; ++j) {
        CHECK(std::abs(result["beta"][j].get<double>() - truth[j]) < 1e-6);
    }
}

TEST_CASE("mdpde beats mle on contaminated data") {
    const auto cfg_sim = g_dir / "sim_bad.cfg";
    write_file(cfg_sim, std::string(kModelBlock) + sim_block() + R"([contamination]
fraction = 0.1
shift = 10
target = response
)");
    const auto data = g_dir / "bad.csv";
    REQUIRE(run("simulate --config " + cfg_sim.string() + " --out " + data.string(), "sim_d") ==
            0);

    const auto fit_with = [&](const std::string& est, const std::string& tag) {
        const auto cfg = g_dir / (tag + ".cfg");
        write_file(cfg, std::string(kModelBlock) + "[fit]\nestimator = " + est + "\n");
        const auto out = g_dir / (tag + ".json");
        REQUIRE(run("fit --config " + cfg.string() + " --data " + data.string() + " --out " +
                        out.string(),
                    tag) == 0);
        const nlohmann::json result = nlohmann::json::parse(read_file(out));
        const std::vector<double> truth{1, 2, 4, 3, 3};
        double dist_sq = 0.0;
        for (int j = 0; j < 5; ++j) {
            const double d = result["beta"][j].get<double>() - truth[j];
            dist_sq += d * d;
        }
        return std::sqrt(dist_sq);
    };
    const double mle_dist = fit_with("mle", "fit_mle");
    const double mdpde_dist = fit_with("mdpde:0.5", "fit_mdpde");
    CHECK(mdpde_dist < mle_dist);
}

TEST_CASE("experiment writes curves, plot data and a summary") {
    const auto cfg = g_dir / "exp.cfg";
    write_file(cfg, std::string(kModelBlock) + R"([simulation]
beta0 = 1,2,4,3,3
sigma0_sq = 0.25
sigma_u_sq = 0.56
n_grid = 25
replications = 2
seed = 777
[estimators]
specs = mle
)");
    const auto out_dir = g_dir / "exp_out";
    CHECK(run("experiment --config " + cfg.string() + " --out " + out_dir.string() +
                  " --threads 2",
              "exp") == 0);
    const std::string curves = read_file(out_dir / "curves.csv");
    CHECK(std::count(curves.begin(), curves.end(), '\n') == 2);  // header + one cell
    CHECK(curves.find("mle,0,25,") != std::string::npos);
    CHECK(read_file(out_dir / "plot_data.csv")
              .rfind("estimator,alpha,n,metric,value\n", 0) == 0);
    CHECK(read_file(out_dir / "summary.txt").find("mle") != std::string::npos);
}

TEST_CASE("diagnose reports assumption checks") {
    const auto cfg_sim = g_dir / "sim_diag.cfg";
    write_file(cfg_sim, std::string(kModelBlock) + sim_block());
    const auto data = g_dir / "diag.csv";
    REQUIRE(run("simulate --config " + cfg_sim.string() + " --out " + data.string(), "sim_e") ==
            0);

    const auto cfg = g_dir / "diag.cfg";
    write_file(cfg, std::string(kModelBlock) + R"([diagnose]
checks = B1,B3,B4
alpha = 0.5
n_probe = 2
)");
    CHECK(run("diagnose --config " + cfg.string() + " --data " + data.string(), "diag") == 0);
    const std::string out = slurp("diag", ".out");
    CHECK(out.find("B.1: holds") != std::string::npos);
    CHECK(out.find("B.3:") != std::string::npos);
    CHECK(out.find("B.4: holds") != std::string::npos);
}

TEST_CASE("error paths exit nonzero with a machine-parsable class") {
    SUBCASE("missing data file") {
        const auto cfg = g_dir / "fit_err.cfg";
        write_file(cfg, std::string(kModelBlock) + "[fit]\nestimator = mle\n");
        CHECK(run("fit --config " + cfg.string() + " --data /nonexistent.csv", "err_io") == 3);
        CHECK(slurp("err_io", ".err").rfind("error: RuntimeError:", 0) == 0);
    }
    SUBCASE("unknown config key with line number") {
        const auto cfg = g_dir / "bad.cfg";
        write_file(cfg, "[model]\nfamily = gaussian\nwat = 7\n");
        CHECK(run("simulate --config " + cfg.string(), "err_cfg") == 2);
        const std::string err = slurp("err_cfg", ".err");
        CHECK(err.rfind("error: ConfigError:", 0) == 0);
        CHECK(err.find("line 3") != std::string::npos);
    }
    SUBCASE("simulate needs a single n") {
        const auto cfg = g_dir / "multi_n.cfg";
        write_file(cfg, std::string(kModelBlock) + R"([simulation]
beta0 = 1,2,4,3,3
sigma0_sq = 0.25
sigma_u_sq = 0.56
n_grid = 10,20
replications = 1
seed = 1
)");
        CHECK(run("simulate --config " + cfg.string(), "err_n") == 2);
    }
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-robmix-binary> [doctest args]\n");
        return 1;
    }
    g_binary = argv[1];
    g_dir = std::filesystem::temp_directory_path() / "robmix_cli_tests";
    std::filesystem::create_directories(g_dir);

    doctest::Context context;
    context.applyCommandLine(argc - 1, argv + 1);
    return context.run();
}
