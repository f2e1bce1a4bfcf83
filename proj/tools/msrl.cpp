#include "msrl/cli.hpp"

int main(int argc, char** argv) { return msrl::cli::run(argc, argv); }
