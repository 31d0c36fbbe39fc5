#include "dfm/cli.hpp"

int main(int argc, char** argv) { return dfm::run_cli(argc, argv); }
