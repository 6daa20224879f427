# config package init
