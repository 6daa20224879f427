# fluid package init
