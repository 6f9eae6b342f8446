// Compresses text read from stdin at a fixed ratio and prints the result.
//
//   echo "Some long prompt. Some long prompt again." | ./compress_prompt 0.5

#include <iostream>
#include <iterator>
#include <string>

#include "pis/pis.hpp"

int main(int argc, char** argv) {
    const double ratio = argc > 1 ? std::stod(argv[1]) : 0.5;
    std::string text((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());

    pis::PipelineConfig cfg;
    cfg.ratio = ratio;
    pis::validate(cfg);

    const pis::Document doc = pis::make_document("stdin", text);
    pis::PipelineContext ctx;
    ctx.cfg = cfg;
    ctx.stats = pis::build_corpus_stats(std::span<const pis::Document>(&doc, 1));

    pis::Rng rng(cfg.seed);
    const auto out = pis::compress_document(doc, ctx, rng);
    std::cout << out.compressed_text << '\n';
    if (out.report.inv_tau) std::cerr << "compression " << *out.report.inv_tau << "x\n";
}
