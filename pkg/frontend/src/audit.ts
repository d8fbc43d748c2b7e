import type { InducedLink } from "./api.js";

const COLUMNS: (keyof InducedLink)[] = ["island_names", "island_num", "nb_num", "nb_names"];

/** Rebuild the island-audit table from a fresh /nb/audit payload. */
export function renderAudit(container: HTMLElement, rows: InducedLink[]): void {
  container.textContent = "";
  if (rows.length === 0) {
    const p = document.createElement("p");
    p.className = "audit-empty";
    p.textContent = "no induced links";
    container.appendChild(p);
    return;
  }
  const table = document.createElement("table");
  table.className = "audit-table";
  const thead = document.createElement("thead");
  const headRow = document.createElement("tr");
  for (const col of COLUMNS) {
    const th = document.createElement("th");
    th.textContent = col;
    headRow.appendChild(th);
  }
  thead.appendChild(headRow);
  table.appendChild(thead);
  const tbody = document.createElement("tbody");
  for (const row of rows) {
    const tr = document.createElement("tr");
    tr.setAttribute("data-island", row.island_names);
    for (const col of COLUMNS) {
      const td = document.createElement("td");
      td.textContent = String(row[col]);
      tr.appendChild(td);
    }
    tbody.appendChild(tr);
  }
  table.appendChild(tbody);
  container.appendChild(table);
}
