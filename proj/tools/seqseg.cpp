#include "seqseg/cli/app.hpp"

int main(int argc, char** argv) { return seqseg::cli::run(argc, argv); }
