"""QP oracle and explicit mpQP synthesis."""
