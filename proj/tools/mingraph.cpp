#include "mingraph/cli.hpp"

int main(int argc, char** argv) { return mingraph::run_cli(argc, argv); }
