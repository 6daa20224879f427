# reporting package init
