#include "fednlp/cli.hpp"

int main(int argc, char** argv) { return fednlp::cli_main(argc, argv); }
