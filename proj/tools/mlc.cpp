#include "mlc/cli.hpp"

int main(int argc, char** argv) { return mlc::run_cli(argc, argv); }
