#include "mnadec/artifacts.hpp"

#include <filesystem>
#include <fstream>

namespace mnadec {

std::vector<std::string> write_decouple_artifacts(const Circuit& circuit,
                                                  const DecoupledSystem& system,
                                                  const std::string& outdir) {
    namespace fs = std::filesystem;
    fs::create_directories(outdir);

    std::vector<std::string> written;
    auto write_matrix = [&](const std::string& name, const SignMatrix& m) {
        std::string path = (fs::path(outdir) / (name + ".mtx")).string();
        write_matrix_market_file(path, m);
        written.push_back(path);
    };
    auto write_text = [&](const std::string& name, const std::string& content) {
        std::string path = (fs::path(outdir) / name).string();
        std::ofstream out(path);
        if (!out) throw Error("cannot open '" + path + "' for writing");
        out << content;
        written.push_back(path);
    };

    const SplitChain& chain = system.chain();
    write_matrix("A", incidence_reduced(circuit));
    write_matrix("Q_Vs", chain.vs.q);
    write_matrix("P_Vs", chain.vs.p);
    write_matrix("Q_C", chain.c.q);
    write_matrix("P_C", chain.c.p);
    write_matrix("Q_Vc", chain.vc.q);
    write_matrix("P_Vc", chain.vc.p);
    write_matrix("Q_R", chain.r.q);
    write_matrix("P_R", chain.r.p);
    write_matrix("V_L", chain.l.v);
    write_matrix("W_L", chain.l.w);
    write_matrix("Q_VsC", chain.q_vs_c);
    write_matrix("Q_VsCVc", chain.q_vs_c_vc);
    write_matrix("Q_VsCVcR", chain.q_vs_c_vc_r);
    write_text("system.json", system.system_to_json());
    write_text("partition.json", system.partition_to_json());
    return written;
}

} // namespace mnadec
